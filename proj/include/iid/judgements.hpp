#ifndef IID_JUDGEMENTS_HPP_
#define IID_JUDGEMENTS_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace iid {

// Pairwise relative-reflectance label: point 1 darker, point 2 darker, or
// equal within the comparison threshold.
enum class Darker : uint8_t { kPoint1 = 1, kPoint2 = 2, kEqual = 3 };

inline char darker_to_char(Darker d) {
  switch (d) {
    case Darker::kPoint1: return '1';
    case Darker::kPoint2: return '2';
    default: return 'E';
  }
}

// Sparse pairwise reflectance comparisons over normalized point locations.
struct JudgementSet {
  struct Point {
    int64_t id = 0;
    double x = 0.0;  // fraction of width in [0, 1]
    double y = 0.0;  // fraction of height in [0, 1]
  };
  struct Comparison {
    int64_t point1 = 0;
    int64_t point2 = 0;
    Darker darker = Darker::kEqual;
    double weight = 1.0;  // confidence w_k >= 0
  };

  std::vector<Point> points;
  std::vector<Comparison> comparisons;

  void validate() const;
};

JudgementSet load_judgements(const std::string& path);
void save_judgements(const JudgementSet& set, const std::string& path);

// Deterministic train/test partition: after sorting ids ascending, every
// fifth id starting with the first goes to the test split.
struct IiwSplit {
  std::vector<int64_t> train_ids;
  std::vector<int64_t> test_ids;
};

IiwSplit iiw_split(std::vector<int64_t> image_ids);

}  // namespace iid

#endif  // IID_JUDGEMENTS_HPP_
