#include "gama/losses.hpp"

namespace gama {

const std::vector<AttackMethod>& all_methods() {
  static const std::vector<AttackMethod> methods = {AttackMethod::gama,        AttackMethod::ls_only,
                                                    AttackMethod::gap_bce,     AttackMethod::cda_rel_bce,
                                                    AttackMethod::ablate_img_only, AttackMethod::ablate_img_txt};
  return methods;
}

std::string method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::gama: return "gama";
    case AttackMethod::ls_only: return "ls_only";
    case AttackMethod::gap_bce: return "gap_bce";
    case AttackMethod::cda_rel_bce: return "cda_rel_bce";
    case AttackMethod::ablate_img_only: return "ablate_img_only";
    case AttackMethod::ablate_img_txt: return "ablate_img_txt";
  }
  return "unknown";
}

AttackMethod method_from_name(const std::string& name) {
  for (auto m : all_methods())
    if (method_name(m) == name) return m;
  throw Error(ErrorKind::config, "method: unknown attack method '" + name + "'");
}

ActiveTerms active_terms(AttackMethod m) {
  switch (m) {
    case AttackMethod::gama: return {true, true, true, false};
    case AttackMethod::ls_only: return {true, false, false, false};
    case AttackMethod::gap_bce:
    case AttackMethod::cda_rel_bce: return {false, false, false, true};
    case AttackMethod::ablate_img_only: return {false, true, false, false};
    case AttackMethod::ablate_img_txt: return {false, true, true, false};
  }
  return {};
}

bool uses_encoder(AttackMethod m) {
  const auto t = active_terms(m);
  return t.l_img || t.l_txt;
}

bool uses_bank(AttackMethod m) { return active_terms(m).l_txt; }

}  // namespace gama
