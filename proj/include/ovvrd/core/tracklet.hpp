#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ovvrd/core/bbox.hpp"
#include "ovvrd/core/error.hpp"

namespace ovvrd {

// One object's temporally contiguous bounding-box sequence. Frames covered
// are the half-open range [begin_fid, end_fid); boxes[i] belongs to frame
// begin_fid + i. Per-frame feature vectors are optional and, when present,
// cover exactly the same frames.
class Tracklet {
 public:
  Tracklet() = default;
  Tracklet(int tid, std::optional<std::string> category, int begin_fid,
           std::vector<BBox> boxes)
      : tid_(tid),
        category_(std::move(category)),
        begin_fid_(begin_fid),
        boxes_(std::move(boxes)) {}

  int tid() const { return tid_; }
  const std::optional<std::string>& category() const { return category_; }
  void set_category(std::string c) { category_ = std::move(c); }

  int begin_fid() const { return begin_fid_; }
  int end_fid() const { return begin_fid_ + static_cast<int>(boxes_.size()); }
  std::size_t length() const { return boxes_.size(); }

  bool covers(int fid) const { return fid >= begin_fid() && fid < end_fid(); }

  const BBox& box(int fid) const {
    if (!covers(fid)) {
      throw ValidationError("tracklet " + std::to_string(tid_) +
                            ": frame " + std::to_string(fid) + " outside span [" +
                            std::to_string(begin_fid()) + "," +
                            std::to_string(end_fid()) + ")");
    }
    return boxes_[static_cast<std::size_t>(fid - begin_fid_)];
  }

  const std::vector<BBox>& boxes() const { return boxes_; }

  bool has_features() const { return !features_.empty(); }
  const std::vector<std::vector<double>>& features() const { return features_; }
  void set_features(std::vector<std::vector<double>> f) {
    if (f.size() != boxes_.size()) {
      throw ValidationError("tracklet " + std::to_string(tid_) +
                            ": feature count != box count");
    }
    features_ = std::move(f);
  }

  void validate() const {
    if (boxes_.empty()) {
      throw ValidationError("tracklet " + std::to_string(tid_) + ": no boxes");
    }
    for (std::size_t i = 0; i < boxes_.size(); ++i) {
      boxes_[i].validate("tracklet " + std::to_string(tid_) + " frame " +
                         std::to_string(begin_fid_ + static_cast<int>(i)));
    }
    if (!features_.empty() && features_.size() != boxes_.size()) {
      throw ValidationError("tracklet " + std::to_string(tid_) +
                            ": feature count != box count");
    }
  }

 private:
  int tid_ = 0;
  std::optional<std::string> category_;
  int begin_fid_ = 0;
  std::vector<BBox> boxes_;
  std::vector<std::vector<double>> features_;
};

// Common half-open frame span of two tracklets; empty() when disjoint.
struct FrameSpan {
  int begin = 0;
  int end = 0;
  bool empty() const { return begin >= end; }
  int length() const { return empty() ? 0 : end - begin; }
};

inline FrameSpan common_span(const Tracklet& a, const Tracklet& b) {
  return {std::max(a.begin_fid(), b.begin_fid()),
          std::min(a.end_fid(), b.end_fid())};
}

}  // namespace ovvrd
