#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadd/config.hpp"
#include "cadd/dataset.hpp"

namespace cadd {

/// Entry point for the `cadd` binary. Returns 0 on success, 2 on usage or
/// configuration errors and 1 on runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Held-out views of the dataset's scene: same objects, cameras drawn with `view_seed`.
Dataset held_out_views(const Dataset& training, std::uint64_t view_seed);

/// Comparative metrics for the named checkpoints plus the gradient-histogram baseline.
nlohmann::json evaluation_report(const std::vector<std::string>& checkpoint_paths, const Dataset& eval_data,
                                 const EvalConfig& config);

}  // namespace cadd
