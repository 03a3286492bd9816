#pragma once

#include <string>
#include <vector>

#include "dds/geometry.hpp"

namespace dds {

// One ground-truth relationship triplet: subject and object with boxes and
// labels plus a nonempty set of relation indices (a pair can hold several
// relations at once).
struct Triplet {
  Box subject_box;
  int subject_label = 0;
  Box object_box;
  int object_label = 0;
  std::vector<int> relations;  // sorted, unique, nonempty
};

struct FrameAnnotation {
  std::vector<Triplet> triplets;
};

struct VideoAnnotation {
  std::string id;
  std::vector<FrameAnnotation> frames;
  int width = 0;
  int height = 0;
};

// (subject label, object label, relation label) — the unit of the
// seen/unseen partition.
struct TripletClass {
  int subject = 0;
  int object = 0;
  int relation = 0;

  auto operator<=>(const TripletClass&) const = default;
};

void validate_frame(const FrameAnnotation& frame, int n_obj, int n_rel,
                    const std::string& locus);

}  // namespace dds
