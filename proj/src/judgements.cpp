#include "iid/judgements.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace iid {

void JudgementSet::validate() const {
  std::set<int64_t> ids;
  for (const auto& p : points) {
    if (!ids.insert(p.id).second) {
      throw std::invalid_argument("judgements: duplicate point id " + std::to_string(p.id));
    }
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0) {
      throw std::invalid_argument("judgements: point " + std::to_string(p.id) +
                                  " coordinates outside [0, 1]");
    }
  }
  for (const auto& c : comparisons) {
    if (c.point1 == c.point2) {
      throw std::invalid_argument("judgements: comparison references the same point twice");
    }
    if (!ids.count(c.point1) || !ids.count(c.point2)) {
      throw std::invalid_argument("judgements: dangling point reference");
    }
    if (c.weight < 0.0) throw std::invalid_argument("judgements: negative weight");
  }
}

namespace {

Darker parse_darker(const std::string& s) {
  if (s == "1") return Darker::kPoint1;
  if (s == "2") return Darker::kPoint2;
  if (s == "E") return Darker::kEqual;
  throw std::invalid_argument("judgements: darker must be one of \"1\", \"2\", \"E\", got \"" + s +
                              "\"");
}

}  // namespace

JudgementSet load_judgements(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("judgements: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("judgements: malformed JSON in " + path + ": " + e.what());
  }
  JudgementSet set;
  try {
    for (const auto& p : j.at("intrinsic_points")) {
      JudgementSet::Point pt;
      pt.id = p.at("id").get<int64_t>();
      pt.x = p.at("x").get<double>();
      pt.y = p.at("y").get<double>();
      set.points.push_back(pt);
    }
    for (const auto& c : j.at("intrinsic_comparisons")) {
      JudgementSet::Comparison cmp;
      cmp.point1 = c.at("point1").get<int64_t>();
      cmp.point2 = c.at("point2").get<int64_t>();
      cmp.darker = parse_darker(c.at("darker").get<std::string>());
      cmp.weight = c.at("darker_score").get<double>();
      set.comparisons.push_back(cmp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("judgements: unexpected schema in " + path + ": " + e.what());
  }
  set.validate();
  return set;
}

void save_judgements(const JudgementSet& set, const std::string& path) {
  nlohmann::ordered_json j;
  j["intrinsic_points"] = nlohmann::json::array();
  for (const auto& p : set.points) {
    j["intrinsic_points"].push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}});
  }
  j["intrinsic_comparisons"] = nlohmann::json::array();
  for (const auto& c : set.comparisons) {
    j["intrinsic_comparisons"].push_back({{"point1", c.point1},
                                          {"point2", c.point2},
                                          {"darker", std::string(1, darker_to_char(c.darker))},
                                          {"darker_score", c.weight}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("judgements: cannot write " + path);
  out << j.dump(2) << "\n";
}

IiwSplit iiw_split(std::vector<int64_t> image_ids) {
  if (image_ids.empty()) throw std::invalid_argument("iiw_split: empty id list");
  std::sort(image_ids.begin(), image_ids.end());
  IiwSplit split;
  for (size_t i = 0; i < image_ids.size(); ++i) {
    if (i % 5 == 0) {
      split.test_ids.push_back(image_ids[i]);
    } else {
      split.train_ids.push_back(image_ids[i]);
    }
  }
  return split;
}

}  // namespace iid
