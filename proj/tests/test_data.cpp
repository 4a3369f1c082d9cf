/* Copyright 2026 The implicit-align Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "implicit_align/data.hpp"

namespace ialign {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ialign_data_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

GeneratorParams params(std::uint64_t seed, std::size_t classes = 6, std::size_t dim = 2) {
  GeneratorParams p;
  p.seed = seed;
  p.num_classes = classes;
  p.input_dim = dim;
  p.shift = parse_shift("tx=1,ty=0.5,scale=1.3");
  return p;
}

TEST(ProfileTest, ExtremeHeadCounts) {
  auto p = make_profile(ProfileKind::extreme, 4, 100);
  EXPECT_EQ(p.counts, (std::vector<std::size_t>{100, 35, 19, 12}));
  auto q = make_profile(ProfileKind::extreme, 40, 100);
  EXPECT_EQ(q.counts.back(), 2u);
}

TEST(ProfileTest, MildRampEndpoints) {
  auto p = make_profile(ProfileKind::mild, 5, 90, 3.0);
  EXPECT_EQ(p.counts.front(), 90u);
  EXPECT_EQ(p.counts.back(), 30u);
  for (std::size_t i = 1; i < p.counts.size(); ++i) EXPECT_LE(p.counts[i], p.counts[i - 1]);
  auto b = make_profile(ProfileKind::balanced, 3, 7);
  EXPECT_EQ(b.counts, (std::vector<std::size_t>{7, 7, 7}));
  EXPECT_EQ(b.total(), 21u);
}

TEST(ProfileTest, ReverseIsAnInvolution) {
  auto p = make_profile(ProfileKind::extreme, 6, 50);
  auto r = reverse_profile(p);
  EXPECT_TRUE(r.reversed);
  EXPECT_EQ(r.counts.front(), p.counts.back());
  auto rr = reverse_profile(r);
  EXPECT_EQ(rr.counts, p.counts);
  EXPECT_FALSE(rr.reversed);
}

TEST(ProfileTest, RsUtPairHasOppositeRanks) {
  auto s = make_profile(ProfileKind::rs_ut_source, 5, 60);
  auto t = make_profile(ProfileKind::rs_ut_target, 5, 60);
  EXPECT_LT(s.counts.front(), s.counts.back());
  EXPECT_GT(t.counts.front(), t.counts.back());
  EXPECT_EQ(reverse_profile(s).counts, t.counts);
}

TEST(ProfileTest, ParseSpec) {
  auto p = parse_profile("mild:2:rev", 4, 40);
  EXPECT_EQ(p.kind, ProfileKind::mild);
  EXPECT_EQ(p.parameter, 2.0);
  EXPECT_TRUE(p.reversed);
  EXPECT_EQ(p.counts.front(), 20u);
  EXPECT_EQ(p.counts.back(), 40u);
  EXPECT_THROW(parse_profile("zipf", 4, 40), Error);
  EXPECT_THROW(parse_profile("mild:abc", 4, 40), Error);
  EXPECT_THROW(parse_profile("mild:0.5", 4, 40), Error);
  EXPECT_THROW(make_profile(ProfileKind::balanced, 1, 40), Error);
  EXPECT_THROW(make_profile(ProfileKind::balanced, 10, 5), Error);
}

TEST(ShiftTest, Parse) {
  auto s = parse_shift("rot=30,tx=1,scale=2");
  EXPECT_EQ(s.rotation_deg, 30.0);
  EXPECT_EQ(s.translate_x, 1.0);
  EXPECT_EQ(s.translate_y, 0.0);
  EXPECT_EQ(s.scale, 2.0);
  EXPECT_TRUE(parse_shift("none").is_identity());
  EXPECT_EQ(parse_shift("off=2.5").offset, 2.5);
  EXPECT_FALSE(parse_shift("off=2.5").is_identity());
  EXPECT_THROW(parse_shift("rot"), Error);
  EXPECT_THROW(parse_shift("shear=1"), Error);
  EXPECT_THROW(parse_shift("tx=abc"), Error);
}

TEST(GeneratorTest, CountsFollowProfiles) {
  auto sp = make_profile(ProfileKind::balanced, 6, 30);
  auto tp = make_profile(ProfileKind::extreme, 6, 60);
  auto pair = generate_domain_pair(params(1), sp, tp);
  EXPECT_EQ(pair.source.size(), sp.total());
  EXPECT_EQ(pair.target.size(), tp.total());
  EXPECT_EQ(pair.target_labels.size(), tp.total());
  for (int y : pair.target.labels) EXPECT_EQ(y, -1);
  ClassIndex src(pair.source.labels, 6), tgt(pair.target_labels, 6);
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_EQ(src.count(c), sp.counts[c]);
    EXPECT_EQ(tgt.count(c), tp.counts[c]);
  }
}

TEST(GeneratorTest, SeedDeterminism) {
  auto sp = make_profile(ProfileKind::mild, 6, 30);
  auto tp = make_profile(ProfileKind::extreme, 6, 30);
  auto a = generate_domain_pair(params(7, 6, 5), sp, tp);
  auto b = generate_domain_pair(params(7, 6, 5), sp, tp);
  auto c = generate_domain_pair(params(8, 6, 5), sp, tp);
  EXPECT_EQ(a.source.features, b.source.features);
  EXPECT_EQ(a.target.features, b.target.features);
  EXPECT_EQ(a.source.labels, b.source.labels);
  EXPECT_EQ(a.target_labels, b.target_labels);
  EXPECT_NE(a.source.features, c.source.features);
}

TEST(GeneratorTest, ShiftMovesTargetClassMeans) {
  auto p = params(3, 4);
  p.sigma = 0.01;
  p.shift = parse_shift("tx=2,ty=-1");
  auto prof = make_profile(ProfileKind::balanced, 4, 50);
  auto pair = generate_domain_pair(p, prof, prof);
  for (std::size_t c = 0; c < 4; ++c) {
    double sx = 0, sy = 0, tx = 0, ty = 0;
    for (std::size_t i = 0; i < pair.source.size(); ++i) {
      if (pair.source.labels[i] != static_cast<int>(c)) continue;
      sx += pair.source.row(i)[0];
      sy += pair.source.row(i)[1];
    }
    for (std::size_t i = 0; i < pair.target.size(); ++i) {
      if (pair.target_labels[i] != static_cast<int>(c)) continue;
      tx += pair.target.row(i)[0];
      ty += pair.target.row(i)[1];
    }
    EXPECT_NEAR(tx / 50 - sx / 50, 2.0, 0.01);
    EXPECT_NEAR(ty / 50 - sy / 50, -1.0, 0.01);
  }
}

TEST(GeneratorTest, OffPlaneShiftIsOneOrthogonalTranslation) {
  auto p = params(4, 4, 5);
  p.sigma = 0.01;
  p.shift = parse_shift("off=3");
  auto prof = make_profile(ProfileKind::balanced, 4, 50);
  auto pair = generate_domain_pair(p, prof, prof);
  auto class_mean = [](const Dataset& d, const std::vector<int>& y, int c) {
    std::vector<double> m(5, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (y[i] == c)
        for (std::size_t r = 0; r < 5; ++r) m[r] += d.row(i)[r] / 50.0;
    return m;
  };
  std::vector<double> first;
  for (int c = 0; c < 4; ++c) {
    auto s = class_mean(pair.source, pair.source.labels, c);
    auto t = class_mean(pair.target, pair.target_labels, c);
    std::vector<double> d(5);
    double norm = 0.0, along_source = 0.0, source_norm = 0.0;
    for (std::size_t r = 0; r < 5; ++r) {
      d[r] = t[r] - s[r];
      norm += d[r] * d[r];
      along_source += d[r] * s[r];
      source_norm += s[r] * s[r];
    }
    EXPECT_NEAR(std::sqrt(norm), 3.0, 0.01);
    EXPECT_NEAR(along_source / std::sqrt(source_norm), 0.0, 0.01);
    if (first.empty()) first = d;
    for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(d[r], first[r], 0.01);
  }
  // Without the offset the source side is unchanged.
  auto q = p;
  q.shift = ShiftSpec{};
  EXPECT_EQ(generate_domain_pair(q, prof, prof).source.features, pair.source.features);
  q.input_dim = 2;
  q.shift.offset = 1.0;
  EXPECT_THROW(generate_domain_pair(q, prof, prof), Error);
}

TEST(GeneratorTest, RejectsBadParameters) {
  auto prof = make_profile(ProfileKind::balanced, 4, 10);
  auto p = params(1, 4);
  p.input_dim = 1;
  EXPECT_THROW(generate_domain_pair(p, prof, prof), Error);
  p = params(1, 5);
  EXPECT_THROW(generate_domain_pair(p, prof, prof), Error);
  p = params(1, 4);
  p.shift.scale = 0.0;
  EXPECT_THROW(generate_domain_pair(p, prof, prof), Error);
}

TEST(DatasetIoTest, CsvRoundTripIsExact) {
  auto prof = make_profile(ProfileKind::mild, 5, 20);
  auto pair = generate_domain_pair(params(11, 5, 4), prof, prof);
  const auto sp = temp_path("src.csv"), tp = temp_path("tgt.csv"), lp = temp_path("lab.csv");
  save_dataset(pair.source, sp);
  save_dataset(pair.target, tp);
  save_labels(pair.target_labels, lp);
  auto s = load_dataset(sp, 5);
  auto t = load_dataset(tp, 5);
  EXPECT_EQ(s.domain, Domain::source);
  EXPECT_EQ(t.domain, Domain::target);
  EXPECT_EQ(s.input_dim, 4u);
  EXPECT_EQ(s.features, pair.source.features);
  EXPECT_EQ(s.labels, pair.source.labels);
  EXPECT_EQ(t.features, pair.target.features);
  EXPECT_EQ(load_labels(lp, 5), pair.target_labels);
  std::remove(sp.c_str());
  std::remove(tp.c_str());
  std::remove(lp.c_str());
}

TEST(DatasetIoTest, MalformedFilesAreRejected) {
  const auto path = temp_path("bad.csv");
  auto expect_bad = [&](const std::string& text) {
    write_file(path, text);
    EXPECT_THROW(load_dataset(path, 3), DataError) << text;
  };
  expect_bad("");
  expect_bad("domain,label\n");
  expect_bad("x,label,f0\nsource,0,1\n");
  expect_bad("domain,label,f0,f1\nsource,0,1\n");
  expect_bad("domain,label,f0\nsource,0,abc\n");
  expect_bad("domain,label,f0\nsource,3,1\n");
  expect_bad("domain,label,f0\nsource,0,1\ntarget,-1,2\n");
  expect_bad("domain,label,f0\nmoon,0,1\n");
  expect_bad("domain,label,f0\n");
  EXPECT_THROW(load_dataset("/nonexistent/x.csv", 3), DataError);
  write_file(path, "index,label\n0,1\n2,1\n");
  EXPECT_THROW(load_labels(path, 3), DataError);
  write_file(path, "index,label\n0,5\n");
  EXPECT_THROW(load_labels(path, 3), DataError);
  write_file(path, "idx,label\n0,1\n");
  EXPECT_THROW(load_labels(path, 3), DataError);
  std::remove(path.c_str());
}

TEST(ClassIndexTest, BucketsPartitionLabeledExamples) {
  const std::vector<int> labels{2, 0, -1, 2, 1, 2, -1, 0};
  ClassIndex idx(labels, 4);
  EXPECT_EQ(idx.bucket(0), (std::vector<std::size_t>{1, 7}));
  EXPECT_EQ(idx.bucket(1), (std::vector<std::size_t>{4}));
  EXPECT_EQ(idx.bucket(2), (std::vector<std::size_t>{0, 3, 5}));
  EXPECT_TRUE(idx.bucket(3).empty());
  EXPECT_EQ(idx.live_classes(), 3u);
  std::size_t total = 0;
  for (std::size_t c = 0; c < 4; ++c) total += idx.count(c);
  EXPECT_EQ(total, 6u);
  EXPECT_THROW(ClassIndex(std::vector<int>{0, 4}, 4), DataError);
}

TEST(DatasetTest, RowsGathersFeatures) {
  Dataset ds;
  ds.input_dim = 2;
  ds.num_classes = 2;
  ds.push_back(std::vector<double>{1, 2}, 0);
  ds.push_back(std::vector<double>{3, 4}, 1);
  const std::vector<std::size_t> idx{1, 1, 0};
  auto t = ds.rows(idx);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t.at(0, 0), 3.0);
  EXPECT_EQ(t.at(2, 1), 2.0);
}

}  // namespace
}  // namespace ialign
