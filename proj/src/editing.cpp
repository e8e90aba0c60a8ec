#include "idedit/editing.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "idedit/errors.hpp"
#include "json.hpp"

namespace idedit {

double AttributeDirection::signed_distance(const LatentCode& w) const {
    validate_latent(w, d_w());
    double s = bias;
    for (std::size_t i = 0; i < normal.size(); ++i) s += w.w[i] * normal[i];
    return s;
}

AttributeDirection fit_direction(const std::vector<LatentCode>& latents, const std::vector<bool>& labels,
                                 const std::string& name, const FitOptions& options) {
    if (latents.size() != labels.size()) throw ValidationError("latents and labels differ in length");
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    const std::size_t negatives = labels.size() - positives;
    if (positives < 2 || negatives < 2) throw ValidationError("fit_direction needs >= 2 samples per class");
    const int d = static_cast<int>(latents.front().size());
    if (d < 1) throw DimensionError("empty latents");
    for (const auto& w : latents) validate_latent(w, d);

    const auto n = static_cast<Eigen::Index>(latents.size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = latents[static_cast<std::size_t>(i)].w[static_cast<std::size_t>(j)];
    }
    // Center and divide by one global scale so the fitted direction does not
    // depend on the overall magnitude of the latents.
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    double scale = std::sqrt(x.squaredNorm() / static_cast<double>(n * d));
    if (!(scale > 0)) scale = 1.0;
    x /= scale;

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    // Augmented design [x, 1]; the intercept is not regularized.
    Eigen::MatrixXd a(n, d + 1);
    a.leftCols(d) = x;
    a.col(d).setOnes();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
    Eigen::VectorXd reg = Eigen::VectorXd::Constant(d + 1, options.l2 * static_cast<double>(n));
    reg(d) = 0.0;

    for (int it = 0; it < options.max_iterations; ++it) {
        const Eigen::VectorXd z = a * theta;
        const Eigen::VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        const Eigen::VectorXd grad = a.transpose() * (p - y) + reg.cwiseProduct(theta);
        const Eigen::VectorXd s = (p.array() * (1.0 - p.array())).max(1e-12).matrix();
        Eigen::MatrixXd h = a.transpose() * s.asDiagonal() * a;
        h.diagonal() += reg;
        h.diagonal().array() += 1e-12;
        const Eigen::VectorXd delta = h.ldlt().solve(grad);
        theta -= delta;
        if (delta.norm() < options.tolerance * (1.0 + theta.norm())) break;
    }

    Eigen::VectorXd normal = theta.head(d) / scale;
    const double norm = normal.norm();
    if (!(norm > 0) || !std::isfinite(norm)) throw ValidationError("fit_direction produced a degenerate normal");
    normal /= norm;
    // Decision function rescaled to the unit normal in raw latent coordinates.
    const double bias = theta(d) / norm - mean.dot(normal.transpose());

    AttributeDirection dir;
    dir.name = name;
    dir.normal.assign(normal.data(), normal.data() + d);
    dir.bias = bias;

    // Orientation: positives must sit on the positive side on average.
    double pos_mean = 0, neg_mean = 0;
    std::vector<double> proj(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) {
        proj[i] = dir.signed_distance(latents[i]);
        (labels[i] ? pos_mean : neg_mean) += proj[i];
    }
    pos_mean /= static_cast<double>(positives);
    neg_mean /= static_cast<double>(negatives);
    if (pos_mean < neg_mean || (pos_mean == neg_mean && pos_mean < 0)) {
        for (double& v : dir.normal) v = -v;
        dir.bias = -dir.bias;
        for (double& v : proj) v = -v;
    }

    std::size_t correct = 0;
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        correct += (proj[i] > 0) == labels[i];
        sum += proj[i];
        sq += proj[i] * proj[i];
    }
    const double cnt = static_cast<double>(latents.size());
    dir.train_accuracy = static_cast<double>(correct) / cnt;
    const double var = std::max(0.0, sq / cnt - (sum / cnt) * (sum / cnt));
    dir.projection_std = var > 0 ? std::sqrt(var) : 1.0;
    return dir;
}

LatentCode edit_latent(const LatentCode& w, const AttributeDirection& direction, double alpha) {
    validate_latent(w, direction.d_w());
    if (!std::isfinite(alpha)) throw ValidationError("alpha must be finite");
    LatentCode out = w;
    if (alpha == 0.0) return out;
    for (std::size_t i = 0; i < out.w.size(); ++i) out.w[i] += alpha * direction.normal[i];
    return out;
}

EditTrajectory make_trajectory(const GenerativeAutoencoder& model, const LatentCode& w,
                               const AttributeDirection& direction, const std::vector<double>& alphas) {
    if (alphas.empty()) throw ValidationError("alphas must be nonempty");
    if (model.mode() != Mode::eval) throw ValidationError("model must be in eval mode");
    EditTrajectory t{w, direction, alphas, {}};
    t.images.reserve(alphas.size());
    for (double a : alphas) t.images.push_back(decode(model, edit_latent(w, direction, a)));
    return t;
}

const std::vector<std::string>& supported_attributes() {
    static const std::vector<std::string> names{"age", "hair", "smile"};
    return names;
}

bool attribute_label(const std::string& attribute, double factor_value) {
    if (attribute == "age") return factor_value > 0.5;
    if (attribute == "smile") return factor_value > 0.0;
    if (attribute == "hair") return factor_value > 0.5;
    throw ValidationError("unknown attribute " + attribute);
}

std::map<std::string, AttributeDirection> fit_attribute_directions(const GenerativeAutoencoder& model,
                                                                   const SyntheticDataset& dataset,
                                                                   const std::vector<std::string>& attributes) {
    if (dataset.size() == 0) throw ValidationError("dataset is empty");
    const auto latents = encode_batch(model, dataset.images);
    std::map<std::string, AttributeDirection> out;
    for (const auto& attr : attributes) {
        std::vector<bool> labels;
        labels.reserve(dataset.size());
        for (const auto& f : dataset.factors) labels.push_back(attribute_label(attr, factor_value(f, attr)));
        out[attr] = fit_direction(latents, labels, attr);
    }
    return out;
}

std::string direction_to_json(const AttributeDirection& d) {
    nlohmann::json j = {{"name", d.name},
                        {"normal", d.normal},
                        {"bias", d.bias},
                        {"train_accuracy", d.train_accuracy},
                        {"d_w", d.d_w()},
                        {"projection_std", d.projection_std}};
    return j.dump(2);
}

AttributeDirection direction_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        AttributeDirection d;
        d.name = j.at("name").get<std::string>();
        d.normal = j.at("normal").get<std::vector<double>>();
        d.bias = j.at("bias").get<double>();
        d.train_accuracy = j.at("train_accuracy").get<double>();
        d.projection_std = j.value("projection_std", 1.0);
        if (j.at("d_w").get<int>() != d.d_w()) throw ValidationError("direction d_w does not match normal length");
        double norm = 0;
        for (double v : d.normal) norm += v * v;
        if (std::abs(std::sqrt(norm) - 1.0) > 1e-6) throw ValidationError("direction normal is not unit length");
        if (d.train_accuracy < 0 || d.train_accuracy > 1) throw ValidationError("train_accuracy outside [0, 1]");
        if (!(d.projection_std > 0)) throw ValidationError("projection_std must be positive");
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed direction file: ") + e.what());
    }
}

void save_direction(const AttributeDirection& d, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << direction_to_json(d) << '\n';
}

AttributeDirection load_direction(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return direction_from_json(ss.str());
}

std::map<std::string, AttributeDirection> load_directions(const std::filesystem::path& dir) {
    std::map<std::string, AttributeDirection> out;
    for (const auto& name : supported_attributes()) {
        const auto p = dir / (name + ".json");
        if (std::filesystem::exists(p)) out[name] = load_direction(p);
    }
    if (out.empty()) throw IoError("no direction files found in " + dir.string());
    return out;
}

}  // namespace idedit
