#pragma once

// Training loop: cross-entropy on the softmax head, plain SGD, seeded
// per-epoch shuffling, patient-level k-fold splitting. Batch gradients may
// fan out over threads but always reduce in chunk order, so --threads 1 is
// bitwise reproducible.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "uts/error.hpp"
#include "uts/lvit.hpp"
#include "uts/rng.hpp"
#include "uts/tape.hpp"
#include "uts/threading.hpp"

namespace uts {

struct LabeledTile {
  Tensor x;  // 32x32x3 in [0,1]
  int label = -1;
};

struct TrainConfig {
  int batch_size = 64;
  int epochs = 30;
  double learning_rate = 0.05;
  uint64_t seed = 1;
  int threads = 1;
  LVitConfig model;

  void validate() const {
    if (batch_size < 1) throw InputError("batch size must be >= 1");
    if (epochs < 1) throw InputError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InputError("learning rate must be positive");
    if (threads < 0) throw InputError("threads must be >= 0");
  }
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_accuracy = std::nan("");  // NaN when no validation set
};

struct TrainResult {
  LVitParams params;
  std::vector<EpochLog> log;
};

inline double cross_entropy(const std::array<double, 3>& probs, int label) {
  if (label < 0 || label >= 3) throw InputError("cross_entropy: bad label " + std::to_string(label));
  return -std::log(std::max(probs[static_cast<size_t>(label)], 1e-12));
}

inline void sgd_step(LVitParams& params, const std::vector<Tensor>& grads, double lr) {
  auto named = named_params(params);
  if (grads.size() != named.size())
    throw std::invalid_argument("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(named.size()) + " parameters");
  for (size_t i = 0; i < named.size(); ++i) {
    Tensor* t = named[i].second;
    require_same_shape(*t, grads[i], ("sgd_step[" + named[i].first + "]").c_str());
    for (size_t j = 0; j < t->data.size(); ++j) t->data[j] -= lr * grads[i].data[j];
  }
}

inline double accuracy(const std::vector<LabeledTile>& tiles, const LVitParams& params,
                       const LVitConfig& cfg, int threads = 1) {
  if (tiles.empty()) return std::nan("");
  std::vector<int> hits(static_cast<size_t>(std::max(threads, 1)), 0);
  parallel_chunks(static_cast<int64_t>(tiles.size()), threads,
                  [&](int chunk, int64_t begin, int64_t end) {
                    int h = 0;
                    for (int64_t i = begin; i < end; ++i)
                      if (lvit_predict(tiles[static_cast<size_t>(i)].x, params, cfg) ==
                          tiles[static_cast<size_t>(i)].label)
                        ++h;
                    hits[static_cast<size_t>(chunk)] = h;
                  });
  int total = 0;
  for (int h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(tiles.size());
}

namespace detail {

// Forward+backward over [begin,end) of the shuffled batch on a fresh tape;
// returns gradients in parameter order plus the summed loss.
inline double batch_chunk_grads(const LVitParams& params, const LVitConfig& cfg,
                                const std::vector<LabeledTile>& data,
                                const std::vector<int64_t>& order, int64_t begin, int64_t end,
                                std::vector<Tensor>& grads_out) {
  Tape tape;
  LVitVars vars = register_params(tape, params);
  Var total{};
  for (int64_t i = begin; i < end; ++i) {
    const LabeledTile& s = data[static_cast<size_t>(order[static_cast<size_t>(i)])];
    Var probs = build_lvit(tape, tape.input(s.x), vars, cfg);
    Var loss = tape.nll(probs, s.label);
    total = total.valid() ? tape.add(total, loss) : loss;
  }
  tape.backward(total);
  grads_out.clear();
  grads_out.reserve(vars.ordered.size());
  for (Var v : vars.ordered) grads_out.push_back(tape.grad(v));
  return tape.value(total).at(0);
}

}  // namespace detail

inline TrainResult train_epochs(const std::vector<LabeledTile>& train,
                                const std::vector<LabeledTile>& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw InputError("training set is empty");
  for (const LabeledTile& s : train)
    if (s.label < 0 || s.label >= 3)
      throw InputError("training label out of range: " + std::to_string(s.label));

  const int threads = resolve_threads(cfg.threads);
  TrainResult res;
  res.params = init_params(cfg.seed);
  validate_config(res.params, cfg.model);
  const int64_t n = static_cast<int64_t>(train.size());

  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t stop = std::min(n, start + cfg.batch_size);
      const int64_t m = stop - start;
      const int chunks = static_cast<int>(std::min<int64_t>(threads, m));
      std::vector<std::vector<Tensor>> chunk_grads(static_cast<size_t>(chunks));
      std::vector<double> chunk_loss(static_cast<size_t>(chunks), 0.0);
      parallel_chunks(m, chunks, [&](int chunk, int64_t begin, int64_t end) {
        chunk_loss[static_cast<size_t>(chunk)] = detail::batch_chunk_grads(
            res.params, cfg.model, train, order, start + begin, start + end,
            chunk_grads[static_cast<size_t>(chunk)]);
      });
      // fixed-order reduction, then one single-threaded update
      std::vector<Tensor>& grads = chunk_grads[0];
      for (int c = 1; c < chunks; ++c)
        for (size_t g = 0; g < grads.size(); ++g)
          for (size_t j = 0; j < grads[g].data.size(); ++j)
            grads[g].data[j] += chunk_grads[static_cast<size_t>(c)][g].data[j];
      const double inv_m = 1.0 / static_cast<double>(m);
      for (auto& g : grads)
        for (double& v : g.data) v *= inv_m;
      sgd_step(res.params, grads, cfg.learning_rate);
      for (int c = 0; c < chunks; ++c) loss_sum += chunk_loss[static_cast<size_t>(c)];
    }

    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = loss_sum / static_cast<double>(n);
    log.val_accuracy = accuracy(val, res.params, cfg.model, threads);
    res.log.push_back(log);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Patient-level k-fold
// ---------------------------------------------------------------------------

struct FoldPlan {
  int k = 3;
  std::map<std::string, int> patient_fold;

  int fold_of_patient(const std::string& patient) const {
    auto it = patient_fold.find(patient);
    if (it == patient_fold.end()) throw InputError("patient '" + patient + "' not in fold plan");
    return it->second;
  }
};

// Patients shuffled with the seed, then dealt round-robin, so fold sizes
// differ by at most one patient and no patient spans folds.
inline FoldPlan kfold_split(const std::vector<std::string>& roi_patients, int k, uint64_t seed) {
  if (k < 1) throw InputError("fold count must be >= 1");
  std::vector<std::string> patients;  // first-appearance order
  for (const std::string& p : roi_patients) {
    if (p.empty()) throw InputError("ROI without a patient id");
    if (std::find(patients.begin(), patients.end(), p) == patients.end()) patients.push_back(p);
  }
  if (k > static_cast<int>(patients.size()))
    throw InputError("fold count " + std::to_string(k) + " exceeds " +
                     std::to_string(patients.size()) + " patients");
  Rng rng(Rng::mix(seed, 0x6b666f6c64ull));  // "kfold" stream, distinct from epoch shuffles
  rng.shuffle(patients);
  FoldPlan plan;
  plan.k = k;
  for (size_t i = 0; i < patients.size(); ++i)
    plan.patient_fold[patients[i]] = static_cast<int>(i % static_cast<size_t>(k));
  return plan;
}

}  // namespace uts
