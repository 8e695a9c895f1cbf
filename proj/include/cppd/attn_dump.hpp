#pragma once

#include <string>

#include "cppd/cppd_model.hpp"
#include "cppd/synth.hpp"

namespace cppd {

/// Runs one forward pass and writes every captured attention map as a binary
/// PGM named attn_<branch>_L<layer>_H<head>_Q<row>.pgm, min-max normalized.
/// For the cc/co branches only the embedding query rows are dumped and the
/// key axis is restricted to the visual tokens, reshaped to the
/// (H/16) x (W/4) grid; the fuse branch keys are the visual tokens already.
/// Returns the number of files written.
int dump_attention(const CppdModel<float>& model, const Image& image,
                   const std::string& out_dir);

}  // namespace cppd
