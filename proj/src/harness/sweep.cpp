#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "clof/harness.hpp"

namespace clof::harness {

std::vector<SweepRow> sample_complexity_sweep(const data::ExperimentConfig& cfg, const data::Splits& splits,
                                              const SweepOptions& o) {
  if (o.sizes.empty()) throw std::invalid_argument("sweep: no sizes");
  for (std::size_t i = 1; i < o.sizes.size(); ++i) {
    if (o.sizes[i] <= o.sizes[i - 1]) throw std::invalid_argument("sweep: sizes must be ascending");
  }
  if (o.sizes.back() > static_cast<int>(splits.train.size())) {
    throw std::invalid_argument("sweep: largest size exceeds the training split");
  }
  const long steps_per_1000 = (1000 + cfg.batch - 1) / cfg.batch;
  const long budget = o.step_budget > 0 ? o.step_budget : static_cast<long>(cfg.epochs) * steps_per_1000;
  std::vector<SweepRow> rows;
  for (int size : o.sizes) {
    data::Splits sub;
    sub.train.assign(splits.train.begin(), splits.train.begin() + size);
    sub.valid = splits.valid;
    sub.test = splits.test;
    const long steps_per_epoch = (size + cfg.batch - 1) / cfg.batch;
    const int epochs = static_cast<int>(std::max<long>(1, (budget + steps_per_epoch - 1) / steps_per_epoch));
    for (const auto& m : o.models) {
      data::ExperimentConfig c = cfg;
      c.model = m;
      c.train = size;
      c.epochs = epochs;
      TrainOptions topt;
      topt.compute_delta_eq = false;
      topt.eval_every = std::max(1, (epochs + o.max_evaluations - 1) / o.max_evaluations);
      const TrainResult r = train_model(c, sub, topt);
      SweepRow row{size, m, r.epochs.empty() ? 0 : r.epochs.back().epoch, r.test_mse};
      if (o.on_row) o.on_row(row);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::string text = "size,model,epochs,test_mse\r\n";
  for (const auto& r : rows) {
    text += std::to_string(r.size) + "," + r.model + "," + std::to_string(r.epochs) + "," +
            data::format_real(r.test_mse) + "\r\n";
  }
  data::write_file(path, text);
}

}  // namespace clof::harness
