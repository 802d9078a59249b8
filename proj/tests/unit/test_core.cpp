#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "cdasr/core/archive.hpp"
#include "cdasr/core/csv.hpp"
#include "cdasr/core/random.hpp"
#include "support/test_support.hpp"

using namespace cdasr;

TEST(Rng, SameSeedSameStream)
{
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i)
        EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, MixSeedSeparatesStreams)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 4; ++s)
        for (std::uint64_t k = 0; k < 64; ++k)
            seen.insert(mix_seed(s, k));
    EXPECT_EQ(seen.size(), 256u);
}

TEST(Rng, UniformAndIndexRanges)
{
    Rng r(7);
    std::vector<int> hist(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const auto k = r.index(5);
        ASSERT_LT(k, 5u);
        ++hist[k];
    }
    for (int h : hist)
        EXPECT_NEAR(h, 1000, 150);
    EXPECT_EQ(r.index(1), 0u);
    EXPECT_EQ(r.index(0), 0u);
}

TEST(Rng, NormalMoments)
{
    Rng r(3);
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.03);
    EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

namespace {

Archive sample_archive()
{
    ArraySet<float> f;
    auto& a = f.add("w", {2, 3});
    for (std::size_t i = 0; i < a.data.size(); ++i)
        a.data[i] = 0.1f * static_cast<float>(i) - 0.2f;
    ArraySet<double> d;
    d.add("v", {4}, 1.0 / 3.0);
    Archive ar;
    ar.meta = {{"kind", "test"}, {"n", 3}};
    ar.add_all(f, "f/");
    ar.add_all(d, "d/");
    return ar;
}

} // namespace

TEST(Archive, RoundTripIsBitExact)
{
    const Archive ar = sample_archive();
    const auto bytes = serialize_archive(ar);
    const Archive back = parse_archive(bytes);
    EXPECT_EQ(back.meta, ar.meta);
    ASSERT_EQ(back.arrays.size(), 2u);
    EXPECT_EQ(back.extract<float>("f/"), ar.extract<float>("f/"));
    EXPECT_EQ(back.extract<double>("d/"), ar.extract<double>("d/"));
    EXPECT_EQ(serialize_archive(back), bytes);
}

TEST(Archive, FileRoundTrip)
{
    const auto dir = fixtures::scratch_dir("archive_file");
    write_archive(dir / "a.cdasr", sample_archive());
    EXPECT_FALSE(std::filesystem::exists(dir / "a.cdasr.tmp"));
    EXPECT_EQ(serialize_archive(read_archive(dir / "a.cdasr")), serialize_archive(sample_archive()));
}

TEST(Archive, TruncationDetectedAtEveryLength)
{
    const auto bytes = serialize_archive(sample_archive());
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
        EXPECT_THROW(parse_archive(cut), archive_error) << "length " << n;
    }
}

TEST(Archive, VersionAndMagicErrors)
{
    auto bytes = serialize_archive(sample_archive());
    auto bad_version = bytes;
    bad_version[8] = 99;
    EXPECT_THROW(parse_archive(bad_version), archive_version_error);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(parse_archive(bad_magic), archive_format_error);
    EXPECT_THROW(read_archive("/nonexistent/file.cdasr"), io_error);
}

TEST(ArraySet, LayoutAndFiniteness)
{
    ArraySet<float> a;
    a.add("x", {2, 2}, 1.0f);
    a.add("y", {3});
    EXPECT_EQ(a.numel(), 7u);
    auto z = a.zeros_like();
    EXPECT_TRUE(a.same_layout(z));
    EXPECT_TRUE(a.all_finite());
    a["y"][1] = std::nanf("");
    EXPECT_EQ(a.first_non_finite(), "y");
    EXPECT_THROW(a.add("x", {1}), invalid_input);
}

TEST(Csv, EscapingRoundTrip)
{
    const auto dir = fixtures::scratch_dir("csv_round_trip");
    {
        CsvWriter w(dir / "t.csv", {"name", "value"});
        w.row({"plain", "1"});
        w.row({"has,comma", "quote\"inside"});
        w.row({"line\nbreak", format_number(0.1)});
    }
    const auto rows = read_csv(dir / "t.csv");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "value"}));
    EXPECT_EQ(rows[2], (std::vector<std::string>{"has,comma", "quote\"inside"}));
    EXPECT_EQ(rows[3][0], "line\nbreak");
    EXPECT_EQ(std::stod(rows[3][1]), 0.1);
}

TEST(Csv, AppendSkipsHeader)
{
    const auto dir = fixtures::scratch_dir("csv_append");
    {
        CsvWriter w(dir / "t.csv", {"a"});
        w.row({"1"});
    }
    {
        CsvWriter w(dir / "t.csv", {"a"}, true);
        w.row({"2"});
    }
    EXPECT_EQ(read_csv(dir / "t.csv").size(), 3u);
}
