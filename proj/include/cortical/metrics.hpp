#pragma once

// Reconstruction quality: structural similarity, PSNR, per-mel-bin profiles
// and the classify-the-outputs protocol.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cortical/common.hpp"
#include "cortical/dataset.hpp"
#include "cortical/nn/train.hpp"

namespace cortical::metrics {

/// PSNR of identical images. Excluded from means and counted separately.
inline constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kSsiWindow = 7;

/// Mean local SSIM over every fully contained window x window patch, with
/// uniform weights, population statistics and C1 = (0.01 L)^2, C2 = (0.03 L)^2.
/// InvalidInput on shape mismatch, an image smaller than the window or
/// non-finite values.
double ssi(const MatrixD& a, const MatrixD& b, std::size_t window = kSsiWindow, double dynamic_range = 1.0);

/// One-dimensional variant over `window`-sample runs.
double ssi_1d(std::span<const double> a, std::span<const double> b, std::size_t window = kSsiWindow,
              double dynamic_range = 1.0);

/// 10 log10(max^2 / MSE); kPsnrInfinite when MSE is zero.
double psnr(std::span<const double> a, std::span<const double> b, double max_value = 1.0);
double psnr(const MatrixD& a, const MatrixD& b, double max_value = 1.0);

struct QualityScore {
    std::size_t example_id = 0;
    double ssi = 0.0;
    double psnr = 0.0;
};

/// Scores each output against its target. Outputs are clipped to [0, 1] first
/// so both images share the unit dynamic range.
std::vector<QualityScore> score_examples(const std::vector<MatrixF>& targets, const std::vector<MatrixF>& outputs);

struct Summary {
    std::size_t count = 0;  // finite values
    std::size_t infinite = 0;
    double mean = 0.0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Five-number summary (linear interpolation between order statistics) and
/// mean over the finite values.
Summary summarize(std::vector<double> values);

struct BinProfile {
    std::size_t bin_index = 0;
    std::vector<double> ssi;   // one value per example
    std::vector<double> psnr;  // one value per example
    Summary ssi_summary;
    Summary psnr_summary;
};

/// For each mel bin, pairs the 44-frame time slices of target and output per
/// example and scores them with ssi_1d and psnr. InvalidInput for linear targets.
std::vector<BinProfile> per_bin_profiles(nn::TargetKind kind, const std::vector<MatrixF>& targets,
                                         const std::vector<MatrixF>& outputs);

// Report writers.
std::string scores_csv(const std::vector<QualityScore>& scores);
std::string profiles_csv(const std::vector<BinProfile>& profiles);
std::string format_psnr(double v);

// ---------------------------------------------------------------------------
// Classify the outputs

struct ClassifyConfig {
    std::uint64_t seed = 0;
    eeg::InputKind input = eeg::InputKind::psd;
    nn::TargetKind target = nn::TargetKind::mel;
    double split_ratio = 0.75;
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    std::size_t patience = 10;
    /// Width of the classifier trunk.
    std::size_t base_filters = 8;
    std::ostream* log = nullptr;
};

struct ClassificationReport {
    std::vector<std::uint16_t> classes;  // song id of each class index
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    /// confusion[true][predicted]
    std::vector<std::vector<std::size_t>> confusion;
    bool untrained_regressor = false;
    bool leakage_free = false;
    nn::TrainReport classifier_training;

    std::string confusion_grid() const;
};

/// Regenerates the corpus's train/test examples with the regressor's split,
/// maps every input through the regressor, trains a classifier on the
/// training outputs (labels = song) and reports top-1 accuracy on the test
/// outputs. One training chunk in six is held out for classifier early stopping.
ClassificationReport classify_outputs(nn::Sequential<float>& regressor, const std::vector<data::Recording>& corpus,
                                      const ClassifyConfig& cfg);

/// Same protocol starting from prepared example sets.
ClassificationReport classify_outputs(nn::Sequential<float>& regressor, const data::SplitSets& sets,
                                      const ClassifyConfig& cfg);

/// True when no (participant, song, second) interval of `a` overlaps one of `b`.
bool intervals_disjoint(const data::ExampleSet& a, const data::ExampleSet& b);

}  // namespace cortical::metrics
