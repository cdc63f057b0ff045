#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfa/geometry.hpp"

using namespace dfa::geom;

namespace {

LandmarkSet random_set(std::mt19937_64& gen, std::size_t n, double truncate_p) {
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  std::bernoulli_distribution cut(truncate_p), occ(0.1);
  LandmarkSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.coords.push_back({u(gen), u(gen)});
    s.visibility.push_back(cut(gen) ? Visibility::Truncated : occ(gen) ? Visibility::Invisible : Visibility::Visible);
  }
  return s;
}

LandmarkSet jittered(const LandmarkSet& gt, std::mt19937_64& gen, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  LandmarkSet p = gt;
  for (auto& c : p.coords) c = {c.x + n(gen), c.y + n(gen)};
  return p;
}

}  // namespace

TEST(Normalize, KnownValues) {
  const BBox box{32, 32, 64, 64};
  const std::vector<Point> px{{0, 0}, {32, 32}, {64, 16}};
  const auto n = normalize_landmarks(px, box);
  EXPECT_EQ(n[0], (Point{-0.5, -0.5}));
  EXPECT_EQ(n[1], (Point{0, 0}));
  EXPECT_EQ(n[2], (Point{0.5, -0.25}));
  EXPECT_THROW(normalize_landmarks(px, BBox{0, 0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(denormalize_landmarks(px, BBox{0, 0, 1, -1}), std::invalid_argument);
}

TEST(Normalize, RoundTripProperty) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> pos(-200, 400), ext(1, 500);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const BBox box{pos(gen), pos(gen), ext(gen), ext(gen)};
    const std::vector<Point> p{{pos(gen), pos(gen)}};
    const auto back = denormalize_landmarks(normalize_landmarks(p, box), box);
    worst = std::max({worst, std::abs(back[0].x - p[0].x), std::abs(back[0].y - p[0].y)});
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(NormalizedError, ExcludesTruncatedIncludesOccluded) {
  LandmarkSet gt{{{0, 0}, {0.1, 0}, {0.3, 0.3}}, {Visibility::Visible, Visibility::Invisible, Visibility::Truncated}};
  LandmarkSet pred{{{0.3, 0.4}, {0.1, 0.1}, {5, 5}}, gt.visibility};
  const auto e = normalized_error(pred, gt);
  EXPECT_DOUBLE_EQ(*e.per_landmark[0], 0.5);
  EXPECT_DOUBLE_EQ(*e.per_landmark[1], 0.1);
  EXPECT_FALSE(e.per_landmark[2].has_value());
  EXPECT_DOUBLE_EQ(*e.mean, 0.3);

  gt.visibility.assign(3, Visibility::Truncated);
  EXPECT_FALSE(normalized_error(pred, gt).mean.has_value());
  pred.coords.pop_back();
  EXPECT_THROW(normalized_error(pred, gt), std::invalid_argument);
}

TEST(NormalizedError, PerfectPredictionIsZero) {
  std::mt19937_64 gen(2);
  std::vector<LandmarkSet> gts;
  for (int i = 0; i < 50; ++i) gts.push_back(random_set(gen, 8, 0.2));
  const auto e = dataset_normalized_error(gts, gts);
  EXPECT_EQ(*e.mean, 0.0);
  EXPECT_EQ(pdl(gts, gts, 1e-9, 64), 1.0);
}

// Brute force: per-landmark sums in sample order, then the mean of the
// per-landmark means.
TEST(NormalizedError, MatchesBruteForceExactly) {
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 gen(100 + trial);
    std::vector<LandmarkSet> gts, preds;
    for (int i = 0; i < 40; ++i) {
      gts.push_back(random_set(gen, 8, 0.3));
      preds.push_back(jittered(gts.back(), gen, 0.05));
    }
    const auto e = dataset_normalized_error(preds, gts);
    double total = 0.0;
    int present = 0;
    for (std::size_t l = 0; l < 8; ++l) {
      double sum = 0.0;
      int count = 0;
      for (std::size_t s = 0; s < gts.size(); ++s) {
        if (gts[s].visibility[l] == Visibility::Truncated) continue;
        sum += std::hypot(preds[s].coords[l].x - gts[s].coords[l].x, preds[s].coords[l].y - gts[s].coords[l].y);
        ++count;
      }
      if (count == 0) {
        EXPECT_FALSE(e.per_landmark[l].has_value());
        continue;
      }
      EXPECT_EQ(*e.per_landmark[l], sum / count);
      total += sum / count;
      ++present;
    }
    EXPECT_EQ(*e.mean, total / present);
  }
}

TEST(Pdl, MatchesBruteForceExactly) {
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 gen(200 + trial);
    std::vector<LandmarkSet> gts, preds;
    for (int i = 0; i < 40; ++i) {
      gts.push_back(random_set(gen, 8, 0.3));
      preds.push_back(jittered(gts.back(), gen, 0.05));
    }
    for (double thr : {0.5, 2.0, 4.2857142857142856, 10.0}) {
      int hit = 0, total = 0;
      for (std::size_t s = 0; s < gts.size(); ++s)
        for (std::size_t l = 0; l < 8; ++l) {
          if (gts[s].visibility[l] == Visibility::Truncated) continue;
          ++total;
          if (std::hypot(preds[s].coords[l].x - gts[s].coords[l].x, preds[s].coords[l].y - gts[s].coords[l].y) * 64 <=
              thr)
            ++hit;
        }
      EXPECT_EQ(pdl(preds, gts, thr, 64), static_cast<double>(hit) / total);
    }
  }
}

TEST(Pdl, ThresholdIsInclusiveAndMonotone) {
  LandmarkSet gt{{{0, 0}}, {Visibility::Visible}};
  LandmarkSet pred{{{0.25, 0}}, {Visibility::Visible}};  // 16 px on a 64-px image
  const std::vector<LandmarkSet> g{gt}, p{pred};
  EXPECT_EQ(pdl(p, g, 16.0, 64), 1.0);
  EXPECT_EQ(pdl(p, g, 15.999, 64), 0.0);
  EXPECT_THROW(pdl(p, g, 0.0, 64), std::invalid_argument);
  gt.visibility[0] = Visibility::Truncated;
  EXPECT_THROW(pdl(p, std::vector<LandmarkSet>{gt}, 1.0, 64), std::invalid_argument);

  std::mt19937_64 gen(3);
  std::vector<LandmarkSet> gts, preds;
  for (int i = 0; i < 30; ++i) {
    gts.push_back(random_set(gen, 8, 0.1));
    preds.push_back(jittered(gts.back(), gen, 0.1));
  }
  double prev = 0.0;
  for (double t = 0.5; t < 40; t += 0.5) {
    const double v = pdl(preds, gts, t, 64);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Subsets, ZoomTakesPrecedenceOverPose) {
  LandmarkSet gt{std::vector<Point>(8), std::vector<Visibility>(8, Visibility::Visible)};
  EXPECT_EQ(classify_subset(PoseClass::Front, gt), Subset::NormalPose);
  EXPECT_EQ(classify_subset(PoseClass::Side, gt), Subset::MediumPose);
  EXPECT_EQ(classify_subset(PoseClass::Back, gt), Subset::LargePose);
  gt.visibility[0] = Visibility::Truncated;
  EXPECT_EQ(classify_subset(PoseClass::Back, gt), Subset::LargePose);  // one cut-off is not a zoom-in
  gt.visibility[1] = Visibility::Truncated;
  EXPECT_EQ(classify_subset(PoseClass::Back, gt), Subset::MediumZoom);
  gt.visibility[2] = Visibility::Truncated;
  EXPECT_EQ(classify_subset(PoseClass::Front, gt), Subset::MediumZoom);
  gt.visibility[3] = Visibility::Truncated;
  EXPECT_EQ(classify_subset(PoseClass::Side, gt), Subset::LargeZoom);
  gt.visibility[4] = Visibility::Invisible;  // occlusion does not count
  EXPECT_EQ(gt.truncated_count(), 4u);
}

TEST(Subsets, NamesRoundTrip) {
  EXPECT_EQ(subset_name(Subset::LargeZoom), "large-zoom");
  for (auto p : {PoseClass::Front, PoseClass::Side, PoseClass::Back}) EXPECT_EQ(parse_pose(pose_name(p)), p);
  EXPECT_THROW(parse_pose("upside-down"), std::invalid_argument);
}

TEST(LandmarkSet, FlattenRoundTrip) {
  std::mt19937_64 gen(4);
  const LandmarkSet s = random_set(gen, 8, 0.3);
  EXPECT_EQ(LandmarkSet::from_flat(s.flatten(), s.visibility), s);
  EXPECT_THROW(LandmarkSet::from_flat(std::vector<double>(3), s.visibility), std::invalid_argument);
}
