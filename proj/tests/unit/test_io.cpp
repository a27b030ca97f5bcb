#include <gtest/gtest.h>

#include <sstream>

#include "patchstitch/io/dataset.hpp"
#include "patchstitch/io/heatmap.hpp"
#include "patchstitch/io/text_formats.hpp"
#include "support/shapes.hpp"
#include "support/temp_dir.hpp"

namespace ps = patchstitch;
namespace io = patchstitch::io;
using ps::Vec3;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ps::DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(TextFormats, ParsesWhitespaceVariantsAndExponents) {
  std::istringstream in("1 2 3\n\t-1.5e-3   +2E2\t0\r\n\n  4.0 5 6  \n");
  const auto v = io::read_vectors(in, "mem");
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], (Vec3{1, 2, 3}));
  EXPECT_EQ(v[1], (Vec3{-1.5e-3, 200.0, 0.0}));
  EXPECT_EQ(v[2], (Vec3{4, 5, 6}));
}

TEST(TextFormats, ErrorsNameFileAndLine) {
  std::istringstream bad("1 2 3\n1 x 3\n");
  EXPECT_NE(message_of([&] { io::read_vectors(bad, "pts.xyz"); }).find("pts.xyz:2"), std::string::npos);
  std::istringstream short_row("1 2 3\n\n1 2\n");
  EXPECT_NE(message_of([&] { io::read_vectors(short_row, "pts.xyz"); }).find("pts.xyz:3"), std::string::npos);
  std::istringstream nan_row("nan 0 0\n");
  EXPECT_THROW(io::read_vectors(nan_row, "pts.xyz"), ps::DataError);
}

TEST(TextFormats, IndicesAreRangeChecked) {
  std::istringstream ok("0\n2\n");
  EXPECT_EQ(io::read_indices(ok, "s.pidx", 3), (std::vector<ps::PointId>{0, 2}));
  std::istringstream bad("0\n3\n");
  EXPECT_NE(message_of([&] { io::read_indices(bad, "s.pidx", 3); }).find("s.pidx:2"), std::string::npos);
  std::istringstream negative("-1\n");
  EXPECT_THROW(io::read_indices(negative, "s.pidx", 3), ps::DataError);
}

TEST(TextFormats, CloudWithNormals) {
  const ps::testing::TempDir dir;
  const auto xyz = dir.write("a.xyz", "0 0 0\n1 0 0\n0 1 0\n");
  const auto nrm = dir.write("a.normals", "0 0 1\n0 0 1\n0 0 -1\n");
  const auto cloud = io::read_cloud(xyz, nrm);
  EXPECT_EQ(cloud.size(), 3u);
  EXPECT_TRUE(cloud.has_normals());
  EXPECT_EQ(cloud.normals()[2], (Vec3{0, 0, -1}));
}

TEST(TextFormats, RowCountMismatchAndEmptyInput) {
  const ps::testing::TempDir dir;
  const auto xyz = dir.write("a.xyz", "0 0 0\n1 0 0\n0 1 0\n");
  const auto nrm = dir.write("a.normals", "0 0 1\n0 0 1\n");
  EXPECT_THROW(io::read_cloud(xyz, nrm), ps::DataError);
  EXPECT_THROW(io::read_cloud(dir.write("e.xyz", "\n")), ps::DataError);
  EXPECT_THROW(io::read_cloud(dir / "missing.xyz"), ps::DataError);
  const auto not_unit = dir.write("b.normals", "0 0 2\n0 0 1\n0 0 1\n");
  EXPECT_THROW(io::read_cloud(xyz, not_unit), ps::DataError);
}

TEST(TextFormats, NormalsRoundTripAtPrintedPrecision) {
  const ps::testing::TempDir dir;
  ps::Rng rng(3);
  std::vector<Vec3> normals;
  for (int i = 0; i < 500; ++i) normals.push_back(ps::testing::random_unit(rng));
  io::write_vectors(dir / "n.normals", normals);
  EXPECT_FALSE(std::filesystem::exists(dir / "n.normals.tmp"));
  const auto back = io::read_vectors(dir / "n.normals");
  ASSERT_EQ(back.size(), normals.size());
  for (std::size_t i = 0; i < normals.size(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(back[i][c], normals[i][c], 1e-9 * std::max(1.0, std::abs(normals[i][c])));
  // A second round trip is exact.
  io::write_vectors(dir / "m.normals", back);
  EXPECT_EQ(ps::testing::read_file(dir / "m.normals"), ps::testing::read_file(dir / "n.normals"));
}

TEST(Heatmap, RampEndpoints) {
  EXPECT_EQ(io::error_color(0.0), (io::Rgb{0, 0, 255}));
  EXPECT_EQ(io::error_color(90.0), (io::Rgb{255, 0, 0}));
  EXPECT_EQ(io::error_color(45.0), (io::Rgb{128, 0, 128}));
  EXPECT_EQ(io::error_color(120.0), (io::Rgb{255, 0, 0}));
}

TEST(Heatmap, PlyHeaderAndVertexColours) {
  const std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const std::vector<Vec3> pred{{0, 0, 1}, {1, 0, 0}, {0, 0, -1}};
  const std::vector<Vec3> gt{{0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
  const auto ply = io::heatmap_ply(pos, pred, gt);
  EXPECT_EQ(ply.rfind("ply\nformat ascii 1.0\n", 0), 0u);
  EXPECT_NE(ply.find("element vertex 3\n"), std::string::npos);
  std::istringstream in(ply.substr(ply.find("end_header\n") + 11));
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "0 0 0 0 0 255 0");
  EXPECT_EQ(rows[1], "1 0 0 255 0 0 90");
  EXPECT_EQ(rows[2], "0 1 0 0 0 255 0");
  EXPECT_THROW(io::heatmap_ply(pos, pred, std::vector<Vec3>{{0, 0, 1}}), ps::DataError);
}

TEST(Dataset, LoadsShapesInSplitOrder) {
  const ps::testing::TempDir dir;
  for (const char* name : {"b", "a"}) {
    dir.write(std::string(name) + ".xyz", "0 0 0\n1 0 0\n0 1 0\n");
    dir.write(std::string(name) + ".normals", "0 0 1\n0 0 1\n0 0 1\n");
  }
  dir.write("a.pidx", "2\n0\n");
  const auto split = dir.write("test.txt", "b\na\n");
  const auto shapes = io::load_dataset(dir.path(), split);
  ASSERT_EQ(shapes.size(), 2u);
  EXPECT_EQ(shapes[0].name, "b");
  EXPECT_TRUE(shapes[0].subset.empty());
  EXPECT_EQ(shapes[1].subset, (std::vector<ps::PointId>{2, 0}));
  EXPECT_THROW(io::load_dataset(dir.path(), split, true), ps::DataError);
  EXPECT_THROW(io::load_shape(dir.path(), "c"), ps::DataError);
}

TEST(Dataset, OutOfRangeSubsetIsAnError) {
  const ps::testing::TempDir dir;
  dir.write("s.xyz", "0 0 0\n1 0 0\n0 1 0\n");
  dir.write("s.normals", "0 0 1\n0 0 1\n0 0 1\n");
  dir.write("s.pidx", "3\n");
  EXPECT_THROW(io::load_shape(dir.path(), "s"), ps::DataError);
}
