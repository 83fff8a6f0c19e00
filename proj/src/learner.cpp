#include "lesionseg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace lesionseg {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double value_at(const Image& img, int idx) {
  const int w = static_cast<int>(img.cols());
  return img(idx / w, idx % w);
}

void check_partition(const RegionPartition& part, Eigen::Index n_pixels) {
  if (part.recist_idx.empty()) throw std::invalid_argument("region_loss: the diameter region is empty");
  for (const auto* set : {&part.recist_idx, &part.fg_idx, &part.bg_idx})
    for (int idx : *set)
      if (idx < 0 || idx >= n_pixels) throw std::out_of_range("region_loss: pixel index out of range");
}

struct MlpViews {
  Eigen::Map<const Eigen::MatrixXd> w1;  // hidden x d
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::VectorXd> w2;
  double b2;
};

MlpViews unpack(const LearnerModel& m) {
  const int h = m.hidden;
  const int d = m.feature.count;
  if (m.theta.size() != m.param_count()) throw std::invalid_argument("learner: parameter count mismatch");
  const double* p = m.theta.data();
  return {Eigen::Map<const Eigen::MatrixXd>(p, h, d), Eigen::Map<const Eigen::VectorXd>(p + h * d, h),
          Eigen::Map<const Eigen::VectorXd>(p + h * d + h, h), p[h * d + 2 * h]};
}

}  // namespace

RegionPartition partition_from_mask(const ByteImage& y, const ByteImage& recist_raster) {
  if (y.rows() != recist_raster.rows() || y.cols() != recist_raster.cols())
    throw std::invalid_argument("partition_from_mask: shapes differ");
  const int w = static_cast<int>(y.cols());
  const int h = static_cast<int>(y.rows());
  RegionPartition part;
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      const int idx = linear_index(xx, yy, w);
      if (recist_raster(yy, xx))
        part.recist_idx.push_back(idx);
      else if (y(yy, xx))
        part.fg_idx.push_back(idx);
      else
        part.bg_idx.push_back(idx);
    }
  }
  return part;
}

RegionPartition partition_from_mask(const ByteImage& y, const RoiImage& roi, const DiameterCross& cross) {
  const DiameterCross local{{cross.long_p1.x() - roi.origin.x(), cross.long_p1.y() - roi.origin.y()},
                            {cross.long_p2.x() - roi.origin.x(), cross.long_p2.y() - roi.origin.y()},
                            {cross.short_p1.x() - roi.origin.x(), cross.short_p1.y() - roi.origin.y()},
                            {cross.short_p2.x() - roi.origin.x(), cross.short_p2.y() - roi.origin.y()}};
  return partition_from_mask(y, rasterize_cross(local, roi.width(), roi.height()));
}

double ramp_value(const RampSchedule& ramp, int epoch, int total_epochs) {
  if (ramp.start > ramp.end || !(ramp.fraction > 0.0) || ramp.fraction > 1.0)
    throw std::invalid_argument("ramp_value: invalid schedule");
  if (total_epochs < 1) throw std::invalid_argument("ramp_value: total_epochs must be positive");
  const double ramp_epochs = ramp.fraction * total_epochs;
  if (epoch >= ramp_epochs) return ramp.end;
  return ramp.start + (ramp.end - ramp.start) * (epoch / ramp_epochs);
}

LossWeights weights_at(const LossConfig& cfg, int epoch, int total_epochs) {
  const double r = ramp_value(cfg.ramp, epoch, total_epochs);
  return {cfg.alpha * r, cfg.beta * r};
}

double region_loss(const Image& yhat, const RegionPartition& part, double alpha, double beta) {
  check_partition(part, yhat.size());
  double l_recist = 0.0;
  for (int idx : part.recist_idx) l_recist -= std::log(clamp_prob(value_at(yhat, idx)));
  l_recist /= static_cast<double>(part.recist_idx.size());

  double l_fg = 0.0;
  if (part.fg_idx.empty()) {
    std::cerr << "warning: empty foreground region, its loss term is 0\n";
  } else {
    for (int idx : part.fg_idx) l_fg -= std::log(clamp_prob(value_at(yhat, idx)));
    l_fg /= static_cast<double>(part.fg_idx.size());
  }

  double l_bg = 0.0;
  if (part.bg_idx.empty()) {
    std::cerr << "warning: empty background region, its loss term is 0\n";
  } else {
    for (int idx : part.bg_idx) l_bg -= std::log(1.0 - clamp_prob(value_at(yhat, idx)));
    l_bg /= static_cast<double>(part.bg_idx.size());
  }
  return l_recist + alpha * l_fg + beta * l_bg;
}

Image region_loss_grad(const Image& yhat, const RegionPartition& part, double alpha, double beta) {
  check_partition(part, yhat.size());
  const int w = static_cast<int>(yhat.cols());
  Image grad = Image::Zero(yhat.rows(), yhat.cols());
  const auto in_range = [](double p) { return p > kProbClamp && p < 1.0 - kProbClamp; };

  const double nr = static_cast<double>(part.recist_idx.size());
  for (int idx : part.recist_idx) {
    const double p = yhat(idx / w, idx % w);
    if (in_range(p)) grad(idx / w, idx % w) += -1.0 / (nr * p);
  }
  if (!part.fg_idx.empty()) {
    const double nf = static_cast<double>(part.fg_idx.size());
    for (int idx : part.fg_idx) {
      const double p = yhat(idx / w, idx % w);
      if (in_range(p)) grad(idx / w, idx % w) += -alpha / (nf * p);
    }
  }
  if (!part.bg_idx.empty()) {
    const double nb = static_cast<double>(part.bg_idx.size());
    for (int idx : part.bg_idx) {
      const double p = yhat(idx / w, idx % w);
      if (in_range(p)) grad(idx / w, idx % w) += beta / (nb * (1.0 - p));
    }
  }
  return grad;
}

FeatureMatrix extract_features_raw(const RoiImage& roi) {
  const int w = roi.width();
  const int h = roi.height();
  const Image& img = roi.pixels;

  // Summed-area tables of I and I^2 with a zero guard row/column.
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(h + 1, w + 1);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(h + 1, w + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = img(y, x);
      s1(y + 1, x + 1) = v + s1(y, x + 1) + s1(y + 1, x) - s1(y, x);
      s2(y + 1, x + 1) = v * v + s2(y, x + 1) + s2(y + 1, x) - s2(y, x);
    }
  }
  const auto box = [&](const Eigen::MatrixXd& s, int x0, int y0, int x1, int y1) {
    return s(y1 + 1, x1 + 1) - s(y0, x1 + 1) - s(y1 + 1, x0) + s(y0, x0);
  };

  FeatureMatrix f(static_cast<Eigen::Index>(w) * h, kFeatureCount);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = linear_index(x, y, w);
      int c = 0;
      f(row, c++) = img(y, x);
      for (int r : kBoxRadii) {
        const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
        const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
        const double count = static_cast<double>((x1 - x0 + 1) * (y1 - y0 + 1));
        const double mean = box(s1, x0, y0, x1, y1) / count;
        const double meansq = box(s2, x0, y0, x1, y1) / count;
        f(row, c++) = mean;
        f(row, c++) = std::sqrt(std::max(0.0, meansq - mean * mean));
      }
      // Clamped central differences; denominator is the actual span.
      const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
      const int yl = std::max(0, y - 1), yr = std::min(h - 1, y + 1);
      const double gx = xr > xl ? (img(y, xr) - img(y, xl)) / (xr - xl) : 0.0;
      const double gy = yr > yl ? (img(yr, x) - img(yl, x)) / (yr - yl) : 0.0;
      f(row, c++) = std::sqrt(gx * gx + gy * gy);
      f(row, c++) = w > 1 ? (x - cx) / cx : 0.0;
      f(row, c++) = h > 1 ? (y - cy) / cy : 0.0;
    }
  }
  return f;
}

FeatureMatrix extract_features(const RoiImage& roi) {
  FeatureMatrix f = extract_features_raw(roi);
  const int w = roi.width();
  const int h = roi.height();

  // Standardize each column by the statistics of the crop's outer frame,
  // the complement of the centered (0.75 w, 0.75 h) rectangle. The crop is
  // twice the annotation bbox per side, so the frame is background on every
  // slice of the lesion tube: lesion pixels standardize to large values,
  // background standardizes to ~0, and a background-only slice lands at the
  // same near-zero level the model saw as background in training. Whole-crop
  // statistics would instead amplify an empty crop's noise to lesion-scale
  // contrast.
  std::vector<Eigen::Index> frame;
  frame.reserve(static_cast<std::size_t>(w) * h / 2);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::abs(x - cx) > 0.375 * w || std::abs(y - cy) > 0.375 * h) frame.push_back(linear_index(x, y, w));
  if (frame.size() < 16) {
    frame.resize(static_cast<std::size_t>(f.rows()));
    std::iota(frame.begin(), frame.end(), Eigen::Index{0});
  }

  const double n = static_cast<double>(frame.size());
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    double mean = 0.0;
    for (Eigen::Index r : frame) mean += f(r, c);
    mean /= n;
    double var = 0.0;
    for (Eigen::Index r : frame) var += (f(r, c) - mean) * (f(r, c) - mean);
    var /= n;
    f.col(c) = (f.col(c).array() - mean) / std::max(std::sqrt(var), kStdFloor);
  }
  return f;
}

LearnerModel init_model(int hidden, Rng& rng) {
  if (hidden < 1) throw std::invalid_argument("init_model: hidden must be positive");
  LearnerModel m;
  m.hidden = hidden;
  m.kind = "mlp" + std::to_string(hidden);
  m.theta = Eigen::VectorXd::Zero(m.param_count());
  const int d = m.feature.count;
  const double lim1 = std::sqrt(6.0 / (d + hidden));
  const double lim2 = std::sqrt(6.0 / (hidden + 1));
  for (int i = 0; i < hidden * d; ++i) m.theta(i) = rng.uniform(-lim1, lim1);
  for (int i = 0; i < hidden; ++i) m.theta(hidden * d + hidden + i) = rng.uniform(-lim2, lim2);
  return m;
}

Eigen::VectorXd predict_features(const LearnerModel& m, const FeatureMatrix& features) {
  if (features.cols() != m.feature.count) throw std::invalid_argument("predict: feature count mismatch");
  const MlpViews v = unpack(m);
  Eigen::MatrixXd hidden = ((features * v.w1.transpose()).rowwise() + v.b1.transpose()).array().tanh();
  Eigen::VectorXd act = (hidden * v.w2).array() + v.b2;
  return (1.0 / (1.0 + (-act.array()).exp())).matrix();
}

Image predict(const LearnerModel& m, const RoiImage& roi) {
  const Eigen::VectorXd p = predict_features(m, extract_features(roi));
  const int w = roi.width();
  Image out(roi.height(), w);
  for (Eigen::Index i = 0; i < p.size(); ++i) out(static_cast<int>(i) / w, static_cast<int>(i) % w) = p(i);
  return out;
}

double loss_and_gradient(const LearnerModel& m, const FeatureMatrix& features, const RegionPartition& part, double alpha, double beta, Eigen::VectorXd* grad) {
  if (features.cols() != m.feature.count) throw std::invalid_argument("loss_and_gradient: feature count mismatch");
  check_partition(part, features.rows());
  const MlpViews v = unpack(m);
  const Eigen::MatrixXd hidden = ((features * v.w1.transpose()).rowwise() + v.b1.transpose()).array().tanh();
  const Eigen::ArrayXd act = (hidden * v.w2).array() + v.b2;
  const Eigen::ArrayXd p = 1.0 / (1.0 + (-act).exp());

  double loss = 0.0;
  Eigen::ArrayXd dl_dp = Eigen::ArrayXd::Zero(p.size());
  const auto in_range = [](double q) { return q > kProbClamp && q < 1.0 - kProbClamp; };

  const double nr = static_cast<double>(part.recist_idx.size());
  double term = 0.0;
  for (int idx : part.recist_idx) {
    term -= std::log(clamp_prob(p(idx)));
    if (in_range(p(idx))) dl_dp(idx) += -1.0 / (nr * p(idx));
  }
  loss += term / nr;

  if (!part.fg_idx.empty()) {
    const double nf = static_cast<double>(part.fg_idx.size());
    term = 0.0;
    for (int idx : part.fg_idx) {
      term -= std::log(clamp_prob(p(idx)));
      if (in_range(p(idx))) dl_dp(idx) += -alpha / (nf * p(idx));
    }
    loss += alpha * term / nf;
  }
  if (!part.bg_idx.empty()) {
    const double nb = static_cast<double>(part.bg_idx.size());
    term = 0.0;
    for (int idx : part.bg_idx) {
      term -= std::log(1.0 - clamp_prob(p(idx)));
      if (in_range(p(idx))) dl_dp(idx) += beta / (nb * (1.0 - p(idx)));
    }
    loss += beta * term / nb;
  }

  if (grad) {
    const Eigen::ArrayXd delta = dl_dp * p * (1.0 - p);  // dL/d activation
    const int h = m.hidden;
    const int d = m.feature.count;
    grad->setZero(m.param_count());
    Eigen::Map<Eigen::MatrixXd> g_w1(grad->data(), h, d);
    Eigen::Map<Eigen::VectorXd> g_b1(grad->data() + h * d, h);
    Eigen::Map<Eigen::VectorXd> g_w2(grad->data() + h * d + h, h);
    double& g_b2 = (*grad)(h * d + 2 * h);

    g_w2 = hidden.transpose() * delta.matrix();
    g_b2 = delta.sum();
    const Eigen::MatrixXd d_hidden =
        (delta.matrix() * v.w2.transpose()).array() * (1.0 - hidden.array().square());
    g_w1 = d_hidden.transpose() * features;
    g_b1 = d_hidden.colwise().sum().transpose();
  }
  return loss;
}

LearnerModel train(const std::vector<TrainExample>& data, const LossConfig& cfg, int epochs, Rng& rng, std::vector<double>* epoch_loss) {
  if (data.empty()) throw std::invalid_argument("train: no training examples");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be positive");

  std::vector<FeatureMatrix> features;
  features.reserve(data.size());
  for (const auto& ex : data) features.push_back(extract_features(ex.roi));

  LearnerModel model = init_model(32, rng);
  Eigen::VectorXd grad(model.param_count());

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  double lr = 1e-2;
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;
  LossWeights prev_w{-1.0, -1.0};
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const LossWeights w = weights_at(cfg, epoch, epochs);
    if (w.alpha != prev_w.alpha || w.beta != prev_w.beta) {
      // The ramp changes the objective; plateau tracking restarts.
      best = std::numeric_limits<double>::infinity();
      stall = 0;
      prev_w = w;
    }
    rng.shuffle(order);
    double sum = 0.0;
    for (int idx : order) {
      sum += loss_and_gradient(model, features[static_cast<std::size_t>(idx)], data[static_cast<std::size_t>(idx)].part, w.alpha, w.beta, &grad);
      model.theta -= lr * grad;
    }
    const double mean_loss = sum / static_cast<double>(data.size());
    if (epoch_loss) epoch_loss->push_back(mean_loss);
    if (mean_loss < best * (1.0 - 1e-4)) {
      best = mean_loss;
      stall = 0;
    } else if (++stall >= 5) {
      lr *= 0.5;
      stall = 0;
    }
  }
  return model;
}

void save_model(const LearnerModel& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "lesionseg-model";
  j["version"] = 1;
  j["kind"] = m.kind;
  j["hidden"] = m.hidden;
  j["feature"] = {{"count", m.feature.count}, {"radii", m.feature.radii}};
  j["theta"] = std::vector<double>(m.theta.data(), m.theta.data() + m.theta.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

LearnerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed model file " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "lesionseg-model" || j.value("version", 0) != 1)
    throw std::runtime_error("unsupported model format in " + path.string());
  LearnerModel m;
  m.kind = j.at("kind").get<std::string>();
  m.hidden = j.at("hidden").get<int>();
  m.feature.count = j.at("feature").at("count").get<int>();
  m.feature.radii = j.at("feature").at("radii").get<std::vector<int>>();
  if (m.feature.count != kFeatureCount || m.feature.radii != std::vector<int>(kBoxRadii.begin(), kBoxRadii.end()))
    throw std::runtime_error("model feature spec mismatch in " + path.string());
  const auto theta = j.at("theta").get<std::vector<double>>();
  if (static_cast<int>(theta.size()) != m.param_count())
    throw std::runtime_error("model parameter count mismatch in " + path.string());
  m.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  return m;
}

ByteImage refine_with_grabcut(const RoiImage& roi, const Image& prob, const DiameterCross& cross, const GrabCutParams& params) {
  return grabcut(roi, seeds_off_slice(roi, prob, cross), params);
}

LearnerModel MlpBackend::train(const std::vector<TrainExample>& data, const LossConfig& cfg, int epochs, Rng& rng) const {
  return lesionseg::train(data, cfg, epochs, rng);
}

Image MlpBackend::predict(const LearnerModel& m, const RoiImage& roi) const { return lesionseg::predict(m, roi); }

}  // namespace lesionseg
