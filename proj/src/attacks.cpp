#include "advforge/attacks.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace advforge {

std::string attack_name(AttackType a) {
  switch (a) {
    case AttackType::FGS: return "FGS";
    case AttackType::FGV: return "FGV";
    case AttackType::HC1: return "HC1";
  }
  throw std::logic_error("unreachable attack type");
}

AttackType attack_from_name(const std::string& name) {
  if (name == "FGS") return AttackType::FGS;
  if (name == "FGV") return AttackType::FGV;
  if (name == "HC1") return AttackType::HC1;
  throw std::invalid_argument("unknown attack type: " + name);
}

std::string failure_name(FailureReason r) {
  return r == FailureReason::zero_gradient ? "zero_gradient" : "label_never_flips";
}

FailureReason failure_from_name(const std::string& name) {
  if (name == "zero_gradient") return FailureReason::zero_gradient;
  if (name == "label_never_flips") return FailureReason::label_never_flips;
  throw std::invalid_argument("unknown failure reason: " + name);
}

Direction fgs_direction(const Tensor& gradient) {
  Direction d;
  d.attack = AttackType::FGS;
  d.vector = Tensor(gradient.shape(), gradient.data().sign());
  return d;
}

Direction fgv_direction(const Tensor& gradient) {
  Direction d;
  d.attack = AttackType::FGV;
  const double linf = gradient.data().abs().maxCoeff();
  d.vector = linf > 0.0 ? Tensor(gradient.shape(), gradient.data() / linf)
                        : Tensor(gradient.shape());
  return d;
}

int select_hot_class(const Tensor& logits, int true_label) {
  const Arr& z = logits.data();
  if (z.size() < 2) throw std::invalid_argument("need at least 2 classes");
  int best = -1;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (static_cast<int>(j) == true_label) continue;
    if (best < 0 || z[j] > z[best]) best = static_cast<int>(j);
  }
  return best;
}

Direction hc_direction(const Model& model, const Tensor& image, int true_label) {
  const Tensor logits = model.forward(image);
  const int hot = select_hot_class(logits, true_label);
  const Tensor g = model.input_gradient(image, Objective::logit_diff(hot, true_label));
  Direction d = fgv_direction(g);
  d.attack = AttackType::HC1;
  d.hot_label = hot;
  return d;
}

Direction attack_direction(const Model& model, const Tensor& image, int true_label,
                           AttackType attack) {
  switch (attack) {
    case AttackType::FGS:
      return fgs_direction(model.input_gradient(image, Objective::loss(true_label)));
    case AttackType::FGV:
      return fgv_direction(model.input_gradient(image, Objective::loss(true_label)));
    case AttackType::HC1:
      return hc_direction(model, image, true_label);
  }
  throw std::logic_error("unreachable attack type");
}

Tensor quantize_clip(const Tensor& image) {
  Tensor out(image.shape());
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const double v = image[i];
    const double r = v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5);
    out[i] = std::min(255.0, std::max(0.0, r));
  }
  return out;
}

PerturbationNorms perturbation_norms(const Tensor& original, const Tensor& adversarial) {
  if (!original.same_shape(adversarial))
    throw ShapeError("perturbation_norms shape mismatch: " + Tensor::shape_str(original.shape()) +
                     " vs " + Tensor::shape_str(adversarial.shape()));
  Arr delta = adversarial.data() - original.data();
  PerturbationNorms n;
  n.l2 = std::sqrt(delta.square().sum());
  n.linf = static_cast<int>(std::lround(delta.abs().maxCoeff()));
  return n;
}

namespace {

// Flipped iff some class strictly outscores the true label; a tie at the top
// involving the true label does not count.
bool label_flipped(const Model& model, const Tensor& adv, int true_label, int* adv_label) {
  const Arr z = model.forward(adv).data();
  bool flipped = false;
  for (Eigen::Index j = 0; j < z.size(); ++j)
    if (static_cast<int>(j) != true_label && z[j] > z[true_label]) flipped = true;
  if (flipped && adv_label) *adv_label = argmax_lowest(z);
  return flipped;
}

}  // namespace

AdversarialRecord minimal_adversarial(const Model& model, const Tensor& image, int true_label,
                                      const Direction& dir, const std::string& image_id) {
  AdversarialRecord rec;
  rec.source_model_id = model.id();
  rec.attack = dir.attack;
  rec.image_id = image_id;
  rec.true_label = true_label;

  if (dir.is_zero()) {
    rec.failure_reason = FailureReason::zero_gradient;
    return rec;
  }

  // Grid unit: 1 pixel for FGS, 0.01 for FGV/HC1.
  const double unit = dir.attack == AttackType::FGS ? 1.0 : 0.01;
  const long max_step = dir.attack == AttackType::FGS ? 255 : 25500;

  auto flips = [&](long step, int* adv_label) {
    Tensor adv = quantize_clip(
        Tensor(image.shape(), image.data() + static_cast<double>(step) * unit * dir.vector.data()));
    return label_flipped(model, adv, true_label, adv_label);
  };

  long hi = -1;
  if (dir.attack == AttackType::FGS) {
    // Exact integer search: ascending scan, first flip wins. Clipping makes
    // the flip set non-monotone in the step size, so a bracketing search
    // could return a non-minimal step; the scan cannot. Flips are typically
    // found within a few steps, so this is also cheap.
    for (long step = 1; step <= max_step; ++step)
      if (flips(step, nullptr)) {
        hi = step;
        break;
      }
    if (hi < 0) {
      rec.failure_reason = FailureReason::label_never_flips;
      return rec;
    }
  } else {
    // 0.01-pixel grid: exponential doubling from one pixel unit, then binary
    // search down to the grid resolution inside the bracket. Minimal at the
    // resolution (the final lo never flips), not globally minimal.
    long lo = 0;
    for (long probe = 100;; probe *= 2) {
      if (probe > max_step) probe = max_step;
      if (flips(probe, nullptr)) {
        hi = probe;
        break;
      }
      lo = probe;
      if (probe == max_step) break;
    }
    if (hi < 0) {
      rec.failure_reason = FailureReason::label_never_flips;
      return rec;
    }
    while (hi - lo > 1) {
      const long mid = lo + (hi - lo) / 2;
      if (flips(mid, nullptr)) hi = mid;
      else lo = mid;
    }
  }

  int adv_label = -1;
  Tensor adv = quantize_clip(Tensor(
      image.shape(), image.data() + static_cast<double>(hi) * unit * dir.vector.data()));
  label_flipped(model, adv, true_label, &adv_label);

  rec.success = true;
  rec.alpha = static_cast<double>(hi) * unit;
  rec.adversarial_label = adv_label;
  rec.perturbation = Tensor(image.shape(), adv.data() - image.data());
  const auto norms = perturbation_norms(image, adv);
  rec.l2 = norms.l2;
  rec.linf = norms.linf;
  return rec;
}

double success_rate(const std::vector<AdversarialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("success_rate of empty record list");
  size_t n = 0;
  for (const auto& r : records) n += r.success ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(records.size());
}

std::string records_csv_header() {
  return "image_id,source_model,attack,true_label,adv_label,alpha,l2,linf,pass,success,failure_reason";
}

std::string record_csv_row(const AdversarialRecord& r) {
  char buf[256];
  if (r.success) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%d,%.2f,%.6f,%d,%.6f,1,", r.image_id.c_str(),
                  r.source_model_id.c_str(), attack_name(r.attack).c_str(), r.true_label,
                  *r.adversarial_label, r.alpha, r.l2, r.linf, r.pass);
  } else {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,,,,,,0,%s", r.image_id.c_str(),
                  r.source_model_id.c_str(), attack_name(r.attack).c_str(), r.true_label,
                  failure_name(*r.failure_reason).c_str());
  }
  return buf;
}

void write_records_csv(const std::string& path, const std::vector<AdversarialRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << records_csv_header() << '\n';
  for (const auto& r : records) out << record_csv_row(r) << '\n';
}

std::vector<AdversarialRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty records CSV: " + path);
  if (line != records_csv_header())
    throw std::runtime_error("unexpected records CSV header in " + path);
  std::vector<AdversarialRecord> records;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    f.resize(11);
    try {
      AdversarialRecord r;
      r.image_id = f[0];
      r.source_model_id = f[1];
      r.attack = attack_from_name(f[2]);
      r.true_label = std::stoi(f[3]);
      r.success = f[9] == "1";
      if (r.success) {
        r.adversarial_label = std::stoi(f[4]);
        r.alpha = std::stod(f[5]);
        r.l2 = std::stod(f[6]);
        r.linf = std::stoi(f[7]);
        r.pass = std::stod(f[8]);
      } else {
        r.failure_reason = failure_from_name(f[10]);
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed records CSV row at " + path + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace advforge
