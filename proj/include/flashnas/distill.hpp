#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "flashnas/archspace.hpp"
#include "flashnas/corpus.hpp"
#include "flashnas/model.hpp"
#include "flashnas/optim.hpp"

namespace flashnas {

enum class ScheduleMode { Flash, Regular };
std::string_view schedule_mode_name(ScheduleMode m);
ScheduleMode schedule_mode_from_name(std::string_view name);

/// Step budget of one distillation run: `steps_per_block` layer-wise steps for
/// each of the K progressive stages, then `pretrain_steps` of pre-training
/// distillation whose first `warmup_steps` ramp the learning rate linearly.
struct Schedule {
  ScheduleMode mode = ScheduleMode::Flash;
  int steps_per_block = 500;
  int pretrain_steps = 25000;
  int warmup_steps = 500;
  /// Target layer-wise : pre-training step ratio used by from_total().
  double ratio = 0.48;
  int batch_size = 16;
  double peak_lr = 1e-3;

  int layerwise_total(int depth) const { return depth * steps_per_block; }
  int total(int depth) const { return layerwise_total(depth) + pretrain_steps; }
  double realized_ratio(int depth) const;
  void validate() const;

  /// Splits `total_steps` so layer-wise : pre-training = ratio; warmup is
  /// `warmup_fraction` of the pre-training steps. The realized total is exact.
  static Schedule from_total(ScheduleMode mode, int total_steps, int depth, double ratio = 0.48,
                             double warmup_fraction = 0.02);
  /// 740k-step regular run: 10k steps per block at depth 24, 500k pre-training.
  static Schedule regular_default(int depth);
  /// `fraction` of the regular budget (5% by default) with the same ratio.
  static Schedule flash_from(const Schedule& regular, int depth, double fraction = 0.05);
};

/// How attention transfer handles a student whose head count differs from the
/// teacher's: compare against head-matched teacher maps, learn a row-stochastic
/// head-mixing adapter, or drop the attention term.
enum class HeadMismatch { Match, Adapter, Skip };
std::string_view head_mismatch_name(HeadMismatch h);
HeadMismatch head_mismatch_from_name(std::string_view name);

struct DistillOptions {
  double alpha = 0.5;
  HeadMismatch head_mismatch = HeadMismatch::Match;
  OptimizerSettings optimizer;
  /// Pre-training loss reports are sampled this many times per run (plus first and last).
  int report_samples = 10;
  /// Start pre-training distillation from the teacher's MLM / NSP heads,
  /// composed with the last block's trained adapter when widths differ.
  bool inherit_heads = true;
};

/// Loss components of the pre-training distillation objective
/// L_D = alpha * L_M + (1 - alpha) * L_MD + L_N, plus optional per-block transfer terms.
struct DistillLossReport {
  std::vector<double> mha;
  std::vector<double> fm;
  double mlm = 0.0;
  double mlm_distill = 0.0;
  double nsp = 0.0;
  double total = 0.0;
  double alpha = 0.5;
  int step = 0;
};

struct StageLog {
  int block = 0;
  std::vector<double> losses;                // L_MHA + L_FM per step
  std::vector<std::uint64_t> block_hashes;   // hash of every block's parameters after the stage
};

struct DistillHistory {
  std::vector<StageLog> stages;
  std::vector<double> pretrain_losses;   // L_D per step
  std::vector<DistillLossReport> reports;
};

/// A student network together with its temporary width adapters.
struct Student {
  ArchitectureConfig config;
  TransformerModel model;
  ParamStore adapters;                 // "adapter{k}/w|b" student hidden -> teacher hidden,
                                       // "adapter{k}/heads" teacher x student head-mix logits
  std::vector<bool> adapter_present;   // feature adapter of block k at index k - 1
  std::vector<bool> head_adapter_present;
  std::vector<int> teacher_block;      // teacher block aligned with student block k (index k - 1)

  static std::string adapter_prefix(int k) { return "adapter" + std::to_string(k) + "/"; }
  /// Drops adapters once distillation is over.
  void discard_adapters();
};

/// Sets the student heads to the teacher heads seen through the adapter of
/// the last student block (a plain copy when hidden sizes agree).
void inherit_heads(Student& student, const TransformerModel& teacher);

/// Linear interpolation of every row along its width.
Matrix resample_columns(const Matrix& source, int width);

/// Instantiates the student template, copies the teacher embedding table
/// (resampled when widths differ) and adds adapters at mismatched transfer points.
Student build_student(const ArchitectureConfig& config, const DesignSpace& space,
                      const TransformerModel& teacher, std::uint64_t seed,
                      HeadMismatch heads = HeadMismatch::Match);

enum class TransferPart { Both, Attention, Features };

/// Stage-k transfer loss L_MHA^k + L_FM^k on `batch` (or one of the two
/// terms); the returned Var is on `tape`. Throws std::invalid_argument when
/// only the attention term is requested but it is skipped.
Var transfer_loss(Tape& tape, const TokenBatch& batch, Student& student, const TransformerModel& teacher,
                  int k, const DistillOptions& options, DistillLossReport* report = nullptr,
                  TransferPart part = TransferPart::Both);

/// Pre-training distillation loss. Throws std::invalid_argument when alpha is
/// outside [0, 1] or the batch has no masked positions. With `transfer_terms`
/// the report also carries per-block L_MHA and L_FM (diagnostic only).
DistillLossReport pretrain_loss(Tape& tape, const TokenBatch& batch, Student& student,
                                const TransformerModel& teacher, double alpha, Var* loss = nullptr,
                                bool transfer_terms = false, const DistillOptions* options = nullptr);

/// Trial aborted by a non-finite loss.
class TrialFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// K-stage layer-wise transfer in block order; stage k trains block k and its
/// adapter only.
void progressive_transfer(Student& student, const TransformerModel& teacher, const Schedule& schedule,
                          const SyntheticCorpus& corpus, std::mt19937_64& rng, const DistillOptions& options,
                          DistillHistory& history);

struct DistillResult {
  Student student;
  DistillHistory history;
};

/// Progressive transfer followed by pre-training distillation. Deterministic given seed.
DistillResult distill(const ArchitectureConfig& config, const DesignSpace& space, const TransformerModel& teacher,
                      const Schedule& schedule, const SyntheticCorpus& corpus, std::uint64_t seed,
                      const DistillOptions& options = {});

struct TeacherTraining {
  int steps = 3000;
  int batch_size = 32;
  double peak_lr = 1e-3;
  int warmup_steps = 100;
  std::uint64_t seed = 11;
  int eval_batches = 32;
};

struct TeacherManifest {
  ModelShape shape;
  TeacherTraining training;
  double mlm_accuracy = 0.0;
  double nsp_accuracy = 0.0;
  double oracle_accuracy = 0.0;
  /// Required MLM accuracy: 0.8 x the bigram oracle on the same eval split.
  double target_accuracy = 0.0;
  bool reached_target = false;
};

struct Teacher {
  TransformerModel model;
  TeacherManifest manifest;
};

/// Trains the teacher template on MLM + NSP from scratch.
Teacher train_teacher(const ModelShape& shape, const SyntheticCorpus& corpus, const TeacherTraining& training);

}  // namespace flashnas
