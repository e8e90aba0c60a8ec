#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "idedit/errors.hpp"
#include "idedit/grid.hpp"
#include "test_util.hpp"

using namespace idedit;
using idedit::testing::random_image;

namespace {

constexpr int kPad = 4;
constexpr int kGlyphH = 7;

GridRow row(const std::string& label, std::uint64_t seed, const std::vector<double>& alphas, int size = 16) {
    GridRow r;
    r.label = label;
    r.trajectory.alphas = alphas;
    for (std::size_t i = 0; i < alphas.size(); ++i) r.trajectory.images.push_back(random_image(size, size, seed + i));
    return r;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Grid, LayoutPlacesTilesByRowAndAlpha) {
    const std::vector<double> alphas{-3, -1.5, 0, 1.5, 3};
    const std::vector<GridRow> rows{row("vanilla", 10, alphas), row("oneshot_encoder", 20, alphas)};
    const auto g = compose_grid(rows);
    const int gutter = text_width("oneshot_encoder") + 2 * kPad;
    const int header = kGlyphH + 2 * kPad;
    EXPECT_EQ(g.width, gutter + 5 * (16 + kPad));
    EXPECT_EQ(g.height, header + 2 * (16 + kPad) + kPad);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 5; ++c) {
            const auto& tile = rows[static_cast<std::size_t>(r)].trajectory.images[static_cast<std::size_t>(c)];
            const int y0 = header + r * (16 + kPad), x0 = gutter + c * (16 + kPad);
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x)
                    for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(g.at(y0 + y, x0 + x, ch), tile.at(y, x, ch));
        }
    }
}

TEST(Grid, AlphaZeroColumnIsReconstruction) {
    const std::vector<double> alphas{-1, 0, 1};
    auto r = row("x", 1, alphas);
    const auto recon = random_image(16, 16, 999);
    r.trajectory.images[1] = recon;
    const auto g = compose_grid({r});
    const int gutter = text_width("x") + 2 * kPad, header = kGlyphH + 2 * kPad;
    ImageTensor cut(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int ch = 0; ch < 3; ++ch) cut.at(y, x, ch) = g.at(header + y, gutter + (16 + kPad) + x, ch);
    EXPECT_EQ(cut, recon);
}

TEST(Grid, CaptionsAndLabelsAreDrawn) {
    const auto g = compose_grid({row("age", 1, {-3, 3})});
    int dark = 0;
    for (int y = 0; y < kGlyphH + 2 * kPad; ++y)
        for (int x = 0; x < g.width; ++x) dark += g.at(y, x, 0) == 0.0f;
    EXPECT_GT(dark, 10);
    ImageTensor blank(10, 40, 1.0f);
    draw_text(blank, 0, 0, "+1.5");
    EXPECT_LT(*std::min_element(blank.pixels.begin(), blank.pixels.end()), 1.0f);
    EXPECT_EQ(text_width(""), 0);
    EXPECT_GT(text_width("AB"), text_width("A"));
}

TEST(Grid, RejectsInconsistentRows) {
    EXPECT_THROW(compose_grid({}), ValidationError);
    EXPECT_THROW(compose_grid({row("a", 1, {0, 1}), row("b", 2, {0, 2})}), ValidationError);
    EXPECT_THROW(compose_grid({row("a", 1, {0, 1}, 16), row("b", 2, {0, 1}, 32)}), ValidationError);
}

TEST(Grid, EmitIsByteDeterministic) {
    const auto dir = idedit::testing::temp_dir("grid");
    const std::vector<GridRow> rows{row("smile", 5, {-3, 0, 3})};
    emit_grids(rows, dir / "a.png");
    emit_grids(rows, dir / "b.png");
    const auto a = file_bytes(dir / "a.png");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, file_bytes(dir / "b.png"));
    const auto back = read_png(dir / "a.png");
    EXPECT_EQ(back.width, compose_grid(rows).width);
    EXPECT_THROW(emit_grids(rows, dir / "missing" / "c.png"), IoError);
    std::filesystem::remove_all(dir);
}
