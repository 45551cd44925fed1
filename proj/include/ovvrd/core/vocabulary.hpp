#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "ovvrd/core/error.hpp"

namespace ovvrd {

// Disjoint base/novel category sets for objects and predicates. Base
// categories are seen during training, novel categories only at evaluation.
struct VocabularySplit {
  std::vector<std::string> objects_base;
  std::vector<std::string> objects_novel;
  std::vector<std::string> predicates_base;
  std::vector<std::string> predicates_novel;

  void canonicalize() {
    std::sort(objects_base.begin(), objects_base.end());
    std::sort(objects_novel.begin(), objects_novel.end());
    std::sort(predicates_base.begin(), predicates_base.end());
    std::sort(predicates_novel.begin(), predicates_novel.end());
  }

  void validate() const {
    check_disjoint(objects_base, objects_novel, "objects");
    check_disjoint(predicates_base, predicates_novel, "predicates");
  }

  std::vector<std::string> all_objects() const { return merged(objects_base, objects_novel); }
  std::vector<std::string> all_predicates() const {
    return merged(predicates_base, predicates_novel);
  }

  bool is_base_object(const std::string& c) const { return contains(objects_base, c); }
  bool is_novel_object(const std::string& c) const { return contains(objects_novel, c); }
  bool is_base_predicate(const std::string& p) const { return contains(predicates_base, p); }
  bool is_novel_predicate(const std::string& p) const { return contains(predicates_novel, p); }

 private:
  static bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  }

  static std::vector<std::string> merged(const std::vector<std::string>& a,
                                         const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  static void check_disjoint(const std::vector<std::string>& base,
                             const std::vector<std::string>& novel,
                             const std::string& what) {
    std::set<std::string> seen(base.begin(), base.end());
    if (seen.size() != base.size()) {
      throw ValidationError("vocabulary: duplicate base " + what);
    }
    for (const auto& n : novel) {
      if (seen.count(n) != 0) {
        throw ValidationError("vocabulary: '" + n + "' appears in both base and novel " +
                              what);
      }
    }
    std::set<std::string> nset(novel.begin(), novel.end());
    if (nset.size() != novel.size()) {
      throw ValidationError("vocabulary: duplicate novel " + what);
    }
  }
};

}  // namespace ovvrd
