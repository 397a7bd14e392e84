#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gama/ops.hpp"

namespace gama {

/// Generator training objectives. `gama` is the full objective; the two
/// ablation arms drop terms; `gap_bce` / `cda_rel_bce` are loss-level
/// adaptations of earlier generative attacks to multi-label BCE.
enum class AttackMethod { gama, ls_only, gap_bce, cda_rel_bce, ablate_img_only, ablate_img_txt };

std::string method_name(AttackMethod m);
AttackMethod method_from_name(const std::string& name);
const std::vector<AttackMethod>& all_methods();

struct ActiveTerms {
  bool l_s = false;
  bool l_img = false;
  bool l_txt = false;
  bool baseline = false;
};

ActiveTerms active_terms(AttackMethod m);
/// Methods that need the joint encoder (image or text term active).
bool uses_encoder(AttackMethod m);
/// Methods that need the prompt bank (text term active).
bool uses_bank(AttackMethod m);

/// Mean over rows of cs(z, z_adv); minimizing pushes features apart.
template <typename T>
Tensor<T> loss_s(const Tensor<T>& z, const Tensor<T>& z_adv) {
  return mean(cosine_similarity(z, z_adv));
}

/// Mean over rows of (1/K) * (|z_adv - rho_txt|^2 + max(0, alpha - |z_adv - z|)).
/// Inputs are expected to be unit-normalized already.
template <typename T>
Tensor<T> loss_txt(const Tensor<T>& z_adv, const Tensor<T>& z, const Tensor<T>& rho_txt, T alpha) {
  if (z_adv.shape() != z.shape() || z_adv.shape() != rho_txt.shape())
    throw Error("loss_txt: dimension mismatch");
  const T inv_k = T(1) / static_cast<T>(z_adv.shape().back());
  auto d_txt = sub(z_adv, rho_txt);
  auto pull = row_sum(mul(d_txt, d_txt));
  auto hinge = relu(add_scalar(scale(row_l2_norm(sub(z_adv, z)), T(-1)), alpha));
  return scale(mean(add(pull, hinge)), inv_k);
}

/// Mean over rows of -(1/K) * |rho_img - z_adv|^2.
template <typename T>
Tensor<T> loss_img(const Tensor<T>& rho_img, const Tensor<T>& z_adv) {
  if (rho_img.shape() != z_adv.shape()) throw Error("loss_img: dimension mismatch");
  const T inv_k = T(1) / static_cast<T>(z_adv.shape().back());
  auto d = sub(rho_img, z_adv);
  return scale(mean(row_sum(mul(d, d))), -inv_k);
}

inline constexpr double kBceFloor = 1e-7;

/// gap_bce: -BCE(sigmoid(logits_adv), y); cda_rel_bce: -BCE(sigmoid(logits_adv - logits_clean), y).
template <typename T>
Tensor<T> baseline_loss(AttackMethod m, const Tensor<T>& logits_clean, const Tensor<T>& logits_adv,
                        const std::vector<T>& labels) {
  if (logits_clean.shape() != logits_adv.shape()) throw Error("baseline_loss: shape mismatch");
  if (static_cast<int64_t>(labels.size()) != logits_adv.numel()) throw Error("baseline_loss: shape mismatch");
  switch (m) {
    case AttackMethod::gap_bce: return scale(bce_with_logits(logits_adv, labels, T(kBceFloor)), T(-1));
    case AttackMethod::cda_rel_bce:
      return scale(bce_with_logits(sub(logits_adv, logits_clean), labels, T(kBceFloor)), T(-1));
    default: throw Error("baseline_loss: " + method_name(m) + " is not a baseline method");
  }
}

template <typename T>
struct LossParts {
  std::optional<Tensor<T>> l_s, l_img, l_txt, l_base;
};

struct LossBreakdown {
  double l_s = 0, l_img = 0, l_txt = 0, l_base = 0, total = 0;
};

template <typename T>
struct CombinedLoss {
  Tensor<T> total;
  LossBreakdown breakdown;
};

/// Sums exactly the terms `m` activates; a missing active part is an error.
template <typename T>
CombinedLoss<T> total_loss(AttackMethod m, const LossParts<T>& parts) {
  const auto terms = active_terms(m);
  CombinedLoss<T> out;
  auto take = [&](bool active, const std::optional<Tensor<T>>& part, double& slot, const char* name) {
    if (!active) return;
    if (!part) throw Error(std::string("total_loss: missing ") + name + " for method " + method_name(m));
    slot = static_cast<double>(part->item());
    out.total = out.total.defined() ? add(out.total, *part) : *part;
  };
  take(terms.l_s, parts.l_s, out.breakdown.l_s, "l_s");
  take(terms.l_img, parts.l_img, out.breakdown.l_img, "l_img");
  take(terms.l_txt, parts.l_txt, out.breakdown.l_txt, "l_txt");
  take(terms.baseline, parts.l_base, out.breakdown.l_base, "baseline loss");
  out.breakdown.total = static_cast<double>(out.total.item());
  return out;
}

}  // namespace gama
