#include "polieval/types.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

namespace polieval {

std::string to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::reference: return "reference";
    case DatasetRole::target_ex_ante: return "target_ex_ante";
    case DatasetRole::target_ex_post: return "target_ex_post";
  }
  return "?";
}

DatasetRole role_from_string(const std::string& s) {
  if (s == "reference") return DatasetRole::reference;
  if (s == "target_ex_ante") return DatasetRole::target_ex_ante;
  if (s == "target_ex_post") return DatasetRole::target_ex_post;
  throw ValidationError("unknown dataset role '" + s + "'");
}

std::optional<double> CovariateView::find(std::string_view name) const {
  if (name == "age") return static_cast<double>(age);
  if (name == "male") return male ? 1.0 : 0.0;
  if (!names) return std::nullopt;
  for (std::size_t j = 0; j < names->size(); ++j) {
    if ((*names)[j] == name) return values[j];
  }
  return std::nullopt;
}

double CovariateView::value_of(std::string_view name) const {
  auto v = find(name);
  if (!v) throw ValidationError("unknown covariate '" + std::string(name) + "'");
  return *v;
}

bool CovariateView::is_missing(std::string_view name) const {
  if (!names) return false;
  for (std::size_t j = 0; j < names->size(); ++j) {
    if ((*names)[j] == name) return j < missing.size() && missing[j] != 0;
  }
  return false;
}

CostSchedule::CostSchedule(double kappa, std::vector<CostBracket> brackets)
    : kappa_(kappa), brackets_(std::move(brackets)) {
  if (!(kappa_ > 0.0)) throw ValidationError("kappa must be > 0");
  if (brackets_.empty()) throw ValidationError("cost schedule needs at least one bracket");
  std::sort(brackets_.begin(), brackets_.end(),
            [](const CostBracket& a, const CostBracket& b) { return a.min_age < b.min_age; });
  for (std::size_t i = 0; i < brackets_.size(); ++i) {
    if (!(brackets_[i].share >= 0.0 && brackets_[i].share < 1.0)) {
      throw ValidationError("transfer share must lie in [0,1), got " +
                            std::to_string(brackets_[i].share));
    }
    if (i > 0 && brackets_[i].min_age == brackets_[i - 1].min_age) {
      throw ValidationError("overlapping cost brackets at min_age " +
                            std::to_string(brackets_[i].min_age));
    }
  }
}

CostSchedule CostSchedule::flat(double share, double kappa) {
  return CostSchedule(kappa, {{std::numeric_limits<int>::min(), share}});
}

bool CostSchedule::covers(int age) const { return age >= brackets_.front().min_age; }

double CostSchedule::share_at(int age) const {
  if (!covers(age)) {
    throw ValidationError("cost schedule does not cover age " + std::to_string(age));
  }
  double share = brackets_.front().share;
  for (const auto& b : brackets_) {
    if (age >= b.min_age) share = b.share;
    else break;
  }
  return share;
}

CovariateView Dataset::covariates_of(const UnitRecord& u) const {
  return CovariateView{u.age, u.male, u.covariates, u.missing, &covariate_names};
}

const Context& Dataset::context_of(const UnitRecord& u) const {
  for (const auto& c : contexts) {
    if (c.context_id == u.context_id) return c;
  }
  throw ValidationError("unit " + u.unit_id + " references unknown context '" + u.context_id + "'");
}

void Dataset::validate() const {
  std::unordered_map<std::string, const Context*> by_id;
  std::size_t attr_len = contexts.empty() ? 0 : contexts.front().attributes.size();
  for (const auto& c : contexts) {
    if (!by_id.emplace(c.context_id, &c).second) {
      throw ValidationError("duplicate context id '" + c.context_id + "'");
    }
    if (c.attributes.size() != attr_len) {
      throw ValidationError("context attribute vectors must share one length");
    }
    if (role == DatasetRole::target_ex_ante && c.is_target &&
        !(c.active_treatments.empty() ||
          (c.active_treatments.size() == 1 && *c.active_treatments.begin() == 0))) {
      throw ValidationError("ex-ante target context '" + c.context_id +
                            "' must hold only the status-quo treatment");
    }
  }
  for (const auto& u : units) {
    auto it = by_id.find(u.context_id);
    if (it == by_id.end()) {
      throw ValidationError("unit " + u.unit_id + " references unknown context '" +
                            u.context_id + "'");
    }
    if (!(u.propensity > 0.0 && u.propensity < 1.0)) {
      throw ValidationError("unit " + u.unit_id + ": propensity " +
                            std::to_string(u.propensity) +
                            " violates overlap (C2 requires p in (0,1))");
    }
    if (u.treatment != 0 && u.treatment != 1) {
      throw ValidationError("unit " + u.unit_id + ": treatment must be 0 or 1");
    }
    if (role == DatasetRole::target_ex_ante && u.treatment != 0) {
      throw ValidationError("ex-ante target dataset contains treated unit " + u.unit_id);
    }
    if (u.covariates.size() != covariate_names.size() ||
        u.missing.size() != covariate_names.size()) {
      throw ValidationError("unit " + u.unit_id + ": covariate vector length mismatch");
    }
  }
}

CovariateView CovariateTable::view(const Row& r) const {
  return CovariateView{r.age, r.male, r.values, r.missing, &covariate_names};
}

}  // namespace polieval
