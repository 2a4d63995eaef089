#pragma once

#include <string>
#include <vector>

#include "hazeforge/image.hpp"

namespace hazeforge::eval {

// NIQE: natural-scene-statistics Gaussian fitted on a pristine corpus.
// Features are 18 per scale (GGD shape/variance of the MSCN coefficients
// plus AGGD shape/mean/left/right-variance of 4 pairwise products) at 2
// scales. Scores are the Mahalanobis-style distance between the image's
// feature Gaussian and the corpus model; lower is better.
struct NiqeModel {
    int patch_size = 32;
    std::vector<double> mean;        // kFeatureDim
    std::vector<double> covariance;  // kFeatureDim x kFeatureDim, row major
};

inline constexpr int kNiqeFeatureDim = 36;

// Requires >= 64 pristine images, each at least 2x patch_size on both sides.
// Patches participate in the fit when their sharpness is >= 0.75 of the
// per-image maximum.
NiqeModel niqe_fit(const std::vector<Image>& pristine_corpus, int patch_size = 32);

double niqe_score(const NiqeModel& model, const Image& image);

void save_niqe_model(const NiqeModel& model, const std::string& path);
NiqeModel load_niqe_model(const std::string& path);

// Feature vector of one image (mean over all patches); exposed for tests.
std::vector<double> niqe_features(const Image& image, int patch_size);

}  // namespace hazeforge::eval
