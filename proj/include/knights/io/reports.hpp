#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "knights/mhpa/attention.hpp"
#include "knights/pretrain/harness.hpp"
#include "knights/tclr/losses.hpp"
#include "knights/tta/aggregate.hpp"

namespace knights::io {

using Json = nlohmann::ordered_json;

/// {loss, per_term[], grad_norm}
Json loss_report(const tclr::LossOutput& loss);

/// {video_id, probs[], top1}
Json prediction_report(const std::string& video_id, const tta::EnsemblePrediction& pred);

/// [{stage, seq_len, dim}, ...]
Json schedule_trace_report(const std::vector<mhpa::StageTrace>& trace);

/// "step,loss,grad_norm" header plus one row per step, values at full precision.
std::string trace_csv(const std::vector<pretrain::TraceStep>& trace);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace knights::io
