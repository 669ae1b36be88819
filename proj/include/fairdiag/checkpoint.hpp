#pragma once

#include <filesystem>

#include "fairdiag/pscrf.hpp"
#include "fairdiag/trainer.hpp"

namespace fairdiag {

// Text checkpoint: a one-line JSON metadata header (model/config/encodings)
// followed by `param <id> <rows> <cols>` blocks with row-major %.17g values.
// Format documented in the README; stable across versions.
void save_checkpoint(const std::filesystem::path& path, PscrfParameters& params, const TrainConfig& cfg);

// Reads only the config header (to reconstruct the data protocol).
TrainConfig read_checkpoint_config(const std::filesystem::path& path);

// Rebuilds the full parameter set. `attrs` must be the attribute table after
// the checkpoint's min-record filter; stored bucket edges and context levels
// are applied to it (never re-derived).
PscrfParameters load_checkpoint(const std::filesystem::path& path, const AttributeTable& attrs);

}  // namespace fairdiag
