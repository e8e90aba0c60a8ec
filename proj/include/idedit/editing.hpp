#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "idedit/faces.hpp"
#include "idedit/model.hpp"

namespace idedit {

// Unit hyperplane normal N in latent space. projection_std is the standard
// deviation of the training latents along N and sets the unit for alpha grids
// expressed in latent standard deviations.
struct AttributeDirection {
    std::string name;
    std::vector<double> normal;
    double bias = 0.0;
    double train_accuracy = 0.0;
    double projection_std = 1.0;

    int d_w() const { return static_cast<int>(normal.size()); }
    // dot(w, normal) + bias
    double signed_distance(const LatentCode& w) const;
};

struct EditTrajectory {
    LatentCode base_latent;
    AttributeDirection direction;
    std::vector<double> alphas;
    std::vector<ImageTensor> images;
};

struct FitOptions {
    double l2 = 1e-3;  // ridge strength on the standardized problem
    int max_iterations = 50;
    double tolerance = 1e-10;
};

// L2-regularized logistic regression solved by Newton's method.
AttributeDirection fit_direction(const std::vector<LatentCode>& latents, const std::vector<bool>& labels,
                                 const std::string& name, const FitOptions& options = {});

// w + alpha * normal
LatentCode edit_latent(const LatentCode& w, const AttributeDirection& direction, double alpha);

EditTrajectory make_trajectory(const GenerativeAutoencoder& model, const LatentCode& w,
                               const AttributeDirection& direction, const std::vector<double>& alphas);

// Ground-truth binary labels used to fit the desk-scale directions.
bool attribute_label(const std::string& attribute, double factor_value);
const std::vector<std::string>& supported_attributes();

// Encodes the dataset and fits one direction per attribute from its
// ground-truth factor labels.
std::map<std::string, AttributeDirection> fit_attribute_directions(const GenerativeAutoencoder& model,
                                                                   const SyntheticDataset& dataset,
                                                                   const std::vector<std::string>& attributes);

std::string direction_to_json(const AttributeDirection& d);
AttributeDirection direction_from_json(const std::string& text);
void save_direction(const AttributeDirection& d, const std::filesystem::path& path);
AttributeDirection load_direction(const std::filesystem::path& path);
// Reads every <attribute>.json from a directory.
std::map<std::string, AttributeDirection> load_directions(const std::filesystem::path& dir);

}  // namespace idedit
