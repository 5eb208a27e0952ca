#include "flashnas/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flashnas/evalbench.hpp"
#include "flashnas/losses.hpp"

namespace flashnas {

std::string_view schedule_mode_name(ScheduleMode m) { return m == ScheduleMode::Flash ? "flash" : "regular"; }

ScheduleMode schedule_mode_from_name(std::string_view name) {
  if (name == "flash") return ScheduleMode::Flash;
  if (name == "regular") return ScheduleMode::Regular;
  throw std::invalid_argument("unknown schedule mode '" + std::string(name) + "'");
}

std::string_view head_mismatch_name(HeadMismatch h) {
  switch (h) {
    case HeadMismatch::Match: return "match";
    case HeadMismatch::Adapter: return "adapter";
    case HeadMismatch::Skip: return "skip";
  }
  return "match";
}

HeadMismatch head_mismatch_from_name(std::string_view name) {
  if (name == "match") return HeadMismatch::Match;
  if (name == "adapter") return HeadMismatch::Adapter;
  if (name == "skip") return HeadMismatch::Skip;
  throw std::invalid_argument("unknown head_mismatch policy '" + std::string(name) + "'");
}

double Schedule::realized_ratio(int depth) const {
  return pretrain_steps > 0 ? static_cast<double>(layerwise_total(depth)) / pretrain_steps : 0.0;
}

void Schedule::validate() const {
  if (steps_per_block < 1) throw std::invalid_argument("steps_per_block must be >= 1");
  if (pretrain_steps < 0 || warmup_steps < 0) throw std::invalid_argument("step counts must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw std::invalid_argument("peak_lr must be positive");
  if (!(ratio > 0.0)) throw std::invalid_argument("schedule ratio must be positive");
}

Schedule Schedule::from_total(ScheduleMode mode, int total_steps, int depth, double ratio, double warmup_fraction) {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (!(ratio > 0.0)) throw std::invalid_argument("schedule ratio must be positive");
  if (total_steps < depth + 1) throw std::invalid_argument("total steps too small for depth");
  Schedule s;
  s.mode = mode;
  s.ratio = ratio;
  const double layerwise = total_steps * ratio / (1.0 + ratio);
  s.steps_per_block = std::max(1, static_cast<int>(std::lround(layerwise / depth)));
  s.pretrain_steps = total_steps - depth * s.steps_per_block;
  if (s.pretrain_steps < 1) throw std::invalid_argument("total steps too small for depth");
  s.warmup_steps = static_cast<int>(std::lround(warmup_fraction * s.pretrain_steps));
  return s;
}

Schedule Schedule::regular_default(int depth) {
  Schedule s = from_total(ScheduleMode::Regular, 740000, 24, 0.48);
  if (depth != 24) s = from_total(ScheduleMode::Regular, s.total(24), depth, 0.48);
  return s;
}

Schedule Schedule::flash_from(const Schedule& regular, int depth, double fraction) {
  const int total = static_cast<int>(std::lround(regular.total(depth) * fraction));
  const double warmup_fraction =
      regular.pretrain_steps > 0 ? static_cast<double>(regular.warmup_steps) / regular.pretrain_steps : 0.0;
  Schedule s = from_total(ScheduleMode::Flash, total, depth, regular.ratio, warmup_fraction);
  s.batch_size = regular.batch_size;
  s.peak_lr = regular.peak_lr;
  return s;
}

void Student::discard_adapters() {
  adapters = ParamStore();
  std::fill(adapter_present.begin(), adapter_present.end(), false);
  std::fill(head_adapter_present.begin(), head_adapter_present.end(), false);
}

void inherit_heads(Student& student, const TransformerModel& teacher) {
  const int depth = student.model.shape().depth;
  const bool adapted = student.adapter_present[static_cast<std::size_t>(depth - 1)];
  const std::string p = Student::adapter_prefix(depth);
  ParamStore& sp = student.model.params();
  for (const char* head : {"head/mlm", "head/nsp"}) {
    const Matrix& tw = teacher.params().at(std::string(head) + "_w").value;
    const Matrix& tb = teacher.params().at(std::string(head) + "_b").value;
    if (adapted) {
      const Matrix& aw = student.adapters.at(p + "w").value;
      const Matrix& ab = student.adapters.at(p + "b").value;
      sp.at(std::string(head) + "_w").value = aw * tw;
      sp.at(std::string(head) + "_b").value = ab * tw + tb;
    } else {
      sp.at(std::string(head) + "_w").value = tw;
      sp.at(std::string(head) + "_b").value = tb;
    }
  }
}

Matrix resample_columns(const Matrix& source, int width) {
  if (width < 1 || source.cols() < 1) throw std::invalid_argument("resample_columns: empty width");
  if (width == source.cols()) return source;
  Matrix out(source.rows(), width);
  const Eigen::Index n = source.cols();
  for (int j = 0; j < width; ++j) {
    const double x = width == 1 ? 0.0 : static_cast<double>(j) * static_cast<double>(n - 1) / (width - 1);
    const auto i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(x)), n - 1);
    const auto i1 = std::min<Eigen::Index>(i0 + 1, n - 1);
    const double frac = x - static_cast<double>(i0);
    out.col(j) = (1.0 - frac) * source.col(i0) + frac * source.col(i1);
  }
  return out;
}

Student build_student(const ArchitectureConfig& config, const DesignSpace& space, const TransformerModel& teacher,
                      std::uint64_t seed, HeadMismatch heads) {
  const ModelShape shape = ModelShape::from(config, space);
  const ModelShape& ts = teacher.shape();
  if (shape.vocab_size != ts.vocab_size || shape.seq_len != ts.seq_len)
    throw std::invalid_argument("student and teacher must share vocab_size and seq_len");

  Student s{config, TransformerModel(shape, seed), ParamStore{}, {}, {}, {}};
  s.model.params().at("embedding/table").value =
      resample_columns(teacher.params().at("embedding/table").value, shape.embed_dim);

  auto rng = make_rng({seed, 0xADA7ull});
  for (int k = 1; k <= shape.depth; ++k) {
    const int tk = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) * ts.depth / shape.depth)), 1,
                              ts.depth);
    s.teacher_block.push_back(tk);
    const bool feature = shape.hidden_size != ts.hidden_size;
    s.adapter_present.push_back(feature);
    if (feature) {
      s.adapters.add(Student::adapter_prefix(k) + "w", truncated_normal(shape.hidden_size, ts.hidden_size, 1.0 / std::sqrt(static_cast<double>(shape.hidden_size)), rng));
      s.adapters.add(Student::adapter_prefix(k) + "b", Matrix::Zero(1, ts.hidden_size));
    }
    const bool head = heads == HeadMismatch::Adapter && shape.attention_heads != ts.attention_heads;
    s.head_adapter_present.push_back(head);
    if (head) s.adapters.add(Student::adapter_prefix(k) + "heads", Matrix::Zero(ts.attention_heads, shape.attention_heads));
  }
  return s;
}

namespace {

struct TransferTerms {
  Var mha;  // invalid when skipped
  Var fm;
};

TransferTerms transfer_terms(Tape& tape, const ForwardPass& sp, const ForwardPass& tp, Student& student,
                             const TransformerModel& teacher, int k, const DistillOptions& options) {
  const int tk = student.teacher_block[static_cast<std::size_t>(k - 1)];
  const int hs = student.model.shape().attention_heads;
  const int ht = teacher.shape().attention_heads;
  TransferTerms out;

  const Var s_attn = sp.attention[static_cast<std::size_t>(k - 1)];
  const Matrix& t_attn = tp.attention[static_cast<std::size_t>(tk - 1)].value();
  if (hs == ht) {
    out.mha = nn::kl_rows(s_attn, t_attn);
  } else if (student.head_adapter_present[static_cast<std::size_t>(k - 1)]) {
    const Var mix = nn::softmax_rows(tape.param(student.adapters, Student::adapter_prefix(k) + "heads"));
    out.mha = nn::kl_rows(nn::mix_heads(s_attn, mix, sp.batch, sp.seq), t_attn);
  } else if (options.head_mismatch != HeadMismatch::Skip) {
    const AttentionTensor matched = match_heads(AttentionTensor{t_attn, tp.batch, ht, tp.seq}, hs);
    out.mha = nn::kl_rows(s_attn, matched.rows);
  }

  Var f = sp.features[static_cast<std::size_t>(k - 1)];
  if (student.adapter_present[static_cast<std::size_t>(k - 1)]) {
    const std::string p = Student::adapter_prefix(k);
    f = nn::add_bias(nn::matmul(f, tape.param(student.adapters, p + "w")), tape.param(student.adapters, p + "b"));
  }
  out.fm = nn::mse(f, tp.features[static_cast<std::size_t>(tk - 1)].value());
  return out;
}

template <typename Fn>
auto guard(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const NonFiniteError& e) {
    throw TrialFailure(where + ": " + e.what());
  }
}

}  // namespace

Var transfer_loss(Tape& tape, const TokenBatch& batch, Student& student, const TransformerModel& teacher, int k,
                  const DistillOptions& options, DistillLossReport* report, TransferPart part) {
  const int depth = student.model.shape().depth;
  if (k < 1 || k > depth) throw std::out_of_range("transfer stage out of range");
  const ForwardPass tp = teacher.forward(tape, batch, student.teacher_block[static_cast<std::size_t>(k - 1)]);
  const ForwardPass sp = student.model.forward(tape, batch, k, true);
  const TransferTerms t = transfer_terms(tape, sp, tp, student, teacher, k, options);
  if (report != nullptr) {
    report->mha.assign(static_cast<std::size_t>(depth), 0.0);
    report->fm.assign(static_cast<std::size_t>(depth), 0.0);
    report->mha[static_cast<std::size_t>(k - 1)] = t.mha.valid() ? t.mha.item() : 0.0;
    report->fm[static_cast<std::size_t>(k - 1)] = t.fm.item();
  }
  if (part == TransferPart::Features) return t.fm;
  if (part == TransferPart::Attention) {
    if (!t.mha.valid()) throw std::invalid_argument("attention transfer term is skipped for this student");
    return t.mha;
  }
  return t.mha.valid() ? nn::add(t.mha, t.fm) : t.fm;
}

DistillLossReport pretrain_loss(Tape& tape, const TokenBatch& batch, Student& student, const TransformerModel& teacher,
                                double alpha, Var* loss, bool transfer, const DistillOptions* options) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (batch.mask_rows.empty()) throw std::invalid_argument("pretrain_loss: batch has no masked positions");

  const ForwardPass tp = teacher.forward(tape, batch);
  const ForwardPass sp = student.model.forward(tape, batch, -1, true);
  const Matrix soft = nn::softmax_rows(teacher.mlm_logits(tape, tp.output, batch.mask_rows).value());
  const Var logits = student.model.mlm_logits(tape, sp.output, batch.mask_rows, true);
  const Var l_m = nn::cross_entropy(logits, batch.mlm_labels);
  const Var l_md = nn::soft_cross_entropy(logits, soft);
  const Var l_n = nn::bce_with_logits(student.model.nsp_logits(tape, sp.output, batch.batch, batch.seq, true),
                                      batch.nsp_labels);
  const Var l_d = nn::add(nn::add(nn::scale(l_m, alpha), nn::scale(l_md, 1.0 - alpha)), l_n);
  if (loss != nullptr) *loss = l_d;

  DistillLossReport r;
  r.alpha = alpha;
  r.mlm = l_m.item();
  r.mlm_distill = l_md.item();
  r.nsp = l_n.item();
  r.total = l_d.item();
  if (transfer) {
    const DistillOptions defaults;
    for (int k = 1; k <= student.model.shape().depth; ++k) {
      const TransferTerms t = transfer_terms(tape, sp, tp, student, teacher, k, options ? *options : defaults);
      r.mha.push_back(t.mha.valid() ? t.mha.item() : 0.0);
      r.fm.push_back(t.fm.item());
    }
  }
  return r;
}

void progressive_transfer(Student& student, const TransformerModel& teacher, const Schedule& schedule,
                          const SyntheticCorpus& corpus, std::mt19937_64& rng, const DistillOptions& options,
                          DistillHistory& history) {
  schedule.validate();
  const int depth = student.model.shape().depth;
  ParamStore& params = student.model.params();
  for (int k = 1; k <= depth; ++k) {
    params.set_all_trainable(false);
    params.set_trainable_prefix(TransformerModel::block_prefix(k), true);
    student.adapters.set_all_trainable(false);
    student.adapters.set_trainable_prefix(Student::adapter_prefix(k), true);
    auto opt = make_optimizer(options.optimizer);
    auto adapter_opt = make_optimizer(options.optimizer);

    StageLog log;
    log.block = k;
    log.losses.reserve(static_cast<std::size_t>(schedule.steps_per_block));
    for (int step = 0; step < schedule.steps_per_block; ++step) {
      const TokenBatch batch = corpus.next_batch(Split::Train, rng, schedule.batch_size);
      const double value = guard("stage " + std::to_string(k) + " step " + std::to_string(step), [&] {
        Tape tape;
        const Var loss = transfer_loss(tape, batch, student, teacher, k, options);
        tape.backward(loss);
        return loss.item();
      });
      opt->step(params, schedule.peak_lr);
      adapter_opt->step(student.adapters, schedule.peak_lr);
      params.zero_grad();
      student.adapters.zero_grad();
      log.losses.push_back(value);
    }
    for (int j = 1; j <= depth; ++j) log.block_hashes.push_back(params.hash(TransformerModel::block_prefix(j)));
    history.stages.push_back(std::move(log));
  }
  params.set_all_trainable(true);
  student.adapters.set_all_trainable(true);
}

namespace {

DistillLossReport probe(const TokenBatch& batch, Student& student, const TransformerModel& teacher,
                        const DistillOptions& options, int step) {
  Tape tape;
  DistillLossReport r = pretrain_loss(tape, batch, student, teacher, options.alpha, nullptr, true, &options);
  r.step = step;
  return r;
}

}  // namespace

DistillResult distill(const ArchitectureConfig& config, const DesignSpace& space, const TransformerModel& teacher,
                      const Schedule& schedule, const SyntheticCorpus& corpus, std::uint64_t seed,
                      const DistillOptions& options) {
  schedule.validate();
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  DistillResult out{build_student(config, space, teacher, seed, options.head_mismatch), {}};
  Student& student = out.student;
  auto rng = make_rng({seed, 0xDA7Aull});
  progressive_transfer(student, teacher, schedule, corpus, rng, options, out.history);
  if (options.inherit_heads) inherit_heads(student, teacher);

  const TokenBatch probe_batch = corpus.eval_set(1, schedule.batch_size).front();
  const int every = std::max(1, schedule.pretrain_steps / std::max(1, options.report_samples));
  ParamStore& params = student.model.params();
  params.set_all_trainable(true);
  auto opt = make_optimizer(options.optimizer);
  out.history.pretrain_losses.reserve(static_cast<std::size_t>(schedule.pretrain_steps));
  for (int step = 0; step < schedule.pretrain_steps; ++step) {
    if (step % every == 0) out.history.reports.push_back(probe(probe_batch, student, teacher, options, step));
    const TokenBatch batch = corpus.next_batch(Split::Train, rng, schedule.batch_size);
    const double value = guard("pretrain step " + std::to_string(step), [&] {
      Tape tape;
      Var loss;
      pretrain_loss(tape, batch, student, teacher, options.alpha, &loss);
      tape.backward(loss);
      return loss.item();
    });
    const double ramp =
        schedule.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / schedule.warmup_steps) : 1.0;
    opt->step(params, schedule.peak_lr * ramp);
    params.zero_grad();
    out.history.pretrain_losses.push_back(value);
  }
  out.history.reports.push_back(probe(probe_batch, student, teacher, options, schedule.pretrain_steps));
  student.discard_adapters();
  return out;
}

Teacher train_teacher(const ModelShape& shape, const SyntheticCorpus& corpus, const TeacherTraining& training) {
  if (training.steps < 0 || training.batch_size < 1 || !(training.peak_lr > 0.0))
    throw std::invalid_argument("invalid teacher training settings");
  if (shape.vocab_size != corpus.config().vocab_size || shape.seq_len != corpus.config().seq_len)
    throw std::invalid_argument("teacher shape does not match the corpus");
  Teacher t{TransformerModel(shape, training.seed), {}};
  ParamStore& params = t.model.params();
  auto opt = make_optimizer({});
  auto rng = make_rng({training.seed, 0x7EAC4ull});
  for (int step = 0; step < training.steps; ++step) {
    const TokenBatch batch = corpus.next_batch(Split::Train, rng, training.batch_size);
    guard("teacher step " + std::to_string(step), [&] {
      Tape tape;
      const ForwardPass pass = t.model.forward(tape, batch);
      const Var loss =
          nn::add(nn::cross_entropy(t.model.mlm_logits(tape, pass.output, batch.mask_rows), batch.mlm_labels),
                  nn::bce_with_logits(t.model.nsp_logits(tape, pass.output, batch.batch, batch.seq), batch.nsp_labels));
      tape.backward(loss);
      return 0;
    });
    const double ramp =
        training.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / training.warmup_steps) : 1.0;
    opt->step(params, training.peak_lr * ramp);
    params.zero_grad();
  }

  const auto eval = corpus.eval_set(training.eval_batches, 32);
  const AccuracyReport acc = eval_accuracy(t.model, eval);
  const BigramOracle oracle(corpus, 200, 32, training.seed);
  t.manifest.shape = shape;
  t.manifest.training = training;
  t.manifest.mlm_accuracy = acc.mlm_accuracy;
  t.manifest.nsp_accuracy = acc.nsp_accuracy;
  t.manifest.oracle_accuracy = oracle.accuracy(eval);
  t.manifest.target_accuracy = 0.8 * t.manifest.oracle_accuracy;
  t.manifest.reached_target = t.manifest.mlm_accuracy > t.manifest.target_accuracy;
  return t;
}

}  // namespace flashnas
