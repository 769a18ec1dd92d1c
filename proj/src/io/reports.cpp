#include "knights/io/reports.hpp"

#include <charconv>

namespace knights::io {

Json loss_report(const tclr::LossOutput& loss) {
    Json j;
    j["loss"] = loss.value;
    j["per_term"] = loss.per_term;
    j["grad_norm"] = loss.grad_norm();
    return j;
}

Json prediction_report(const std::string& video_id, const tta::EnsemblePrediction& pred) {
    Json j;
    j["video_id"] = video_id;
    j["probs"] = pred.probs;
    j["top1"] = pred.top1;
    return j;
}

Json schedule_trace_report(const std::vector<mhpa::StageTrace>& trace) {
    Json arr = Json::array();
    for (std::size_t s = 0; s < trace.size(); ++s) {
        arr.push_back({{"stage", s}, {"seq_len", trace[s].seq_len}, {"dim", trace[s].dim}});
    }
    return arr;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string trace_csv(const std::vector<pretrain::TraceStep>& trace) {
    std::string out = "step,loss,grad_norm\n";
    for (const auto& t : trace) {
        out += std::to_string(t.step) + "," + format_double(t.loss) + "," + format_double(t.grad_norm) + "\n";
    }
    return out;
}

}  // namespace knights::io
