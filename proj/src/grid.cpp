#include "idedit/grid.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <map>

#include "idedit/errors.hpp"

namespace idedit {
namespace {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;
constexpr int kAdvance = kGlyphW + 1;
constexpr int kPad = 4;

using Glyph = std::array<const char*, kGlyphH>;

const std::map<char, Glyph>& font() {
    static const std::map<char, Glyph> glyphs = {
        {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
        {'B', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
        {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
        {'D', {"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}},
        {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
        {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
        {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}},
        {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
        {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
        {'J', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
        {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
        {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
        {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
        {'N', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
        {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
        {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
        {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
        {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
        {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
        {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
        {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
        {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
        {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
        {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
        {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
        {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
        {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
        {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
        {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
        {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
        {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
        {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
        {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
        {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
        {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
        {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
        {'-', {".....", ".....", ".....", "#####", ".....", ".....", "....."}},
        {'+', {".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."}},
        {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}},
        {'_', {".....", ".....", ".....", ".....", ".....", ".....", "#####"}},
        {'=', {".....", ".....", "#####", ".....", "#####", ".....", "....."}},
        {':', {".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."}},
    };
    return glyphs;
}

std::string alpha_caption(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f", a);
    return buf;
}

}  // namespace

int text_width(const std::string& text) {
    return text.empty() ? 0 : static_cast<int>(text.size()) * kAdvance - 1;
}

void draw_text(ImageTensor& canvas, int x, int y, const std::string& text, float value) {
    const auto& glyphs = font();
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto it = glyphs.find(static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
        if (it == glyphs.end()) continue;
        const int gx = x + static_cast<int>(i) * kAdvance;
        for (int r = 0; r < kGlyphH; ++r) {
            for (int c = 0; c < kGlyphW; ++c) {
                if (it->second[static_cast<std::size_t>(r)][c] != '#') continue;
                const int px = gx + c, py = y + r;
                if (px < 0 || py < 0 || px >= canvas.width || py >= canvas.height) continue;
                for (int ch = 0; ch < 3; ++ch) canvas.at(py, px, ch) = value;
            }
        }
    }
}

ImageTensor compose_grid(const std::vector<GridRow>& rows) {
    if (rows.empty()) throw ValidationError("emit_grids: no trajectories");
    const auto& alphas = rows.front().trajectory.alphas;
    const auto& first = rows.front().trajectory.images;
    if (first.empty()) throw ValidationError("emit_grids: empty trajectory");
    const int tile_h = first.front().height, tile_w = first.front().width;
    int gutter = 0;
    for (const auto& row : rows) {
        if (row.trajectory.alphas != alphas || row.trajectory.images.size() != alphas.size()) {
            throw ValidationError("emit_grids: rows must share the alpha grid");
        }
        for (const auto& img : row.trajectory.images) {
            if (img.height != tile_h || img.width != tile_w) throw ValidationError("emit_grids: tile size mismatch");
        }
        gutter = std::max(gutter, text_width(row.label));
    }
    gutter += 2 * kPad;
    const int header = kGlyphH + 2 * kPad;
    const int cols = static_cast<int>(alphas.size());
    const int nrows = static_cast<int>(rows.size());

    ImageTensor canvas(header + nrows * (tile_h + kPad) + kPad, gutter + cols * (tile_w + kPad));
    std::fill(canvas.pixels.begin(), canvas.pixels.end(), 1.0f);
    for (int c = 0; c < cols; ++c) {
        const std::string cap = alpha_caption(alphas[static_cast<std::size_t>(c)]);
        const int x0 = gutter + c * (tile_w + kPad);
        draw_text(canvas, x0 + (tile_w - text_width(cap)) / 2, kPad, cap);
    }
    for (int r = 0; r < nrows; ++r) {
        const int y0 = header + r * (tile_h + kPad);
        draw_text(canvas, kPad, y0 + (tile_h - kGlyphH) / 2, rows[static_cast<std::size_t>(r)].label);
        for (int c = 0; c < cols; ++c) {
            const ImageTensor& tile = rows[static_cast<std::size_t>(r)].trajectory.images[static_cast<std::size_t>(c)];
            const int x0 = gutter + c * (tile_w + kPad);
            for (int y = 0; y < tile_h; ++y) {
                for (int x = 0; x < tile_w; ++x) {
                    for (int ch = 0; ch < 3; ++ch) canvas.at(y0 + y, x0 + x, ch) = tile.at(y, x, ch);
                }
            }
        }
    }
    return canvas;
}

void emit_grids(const std::vector<GridRow>& rows, const std::filesystem::path& path) {
    write_png(path, compose_grid(rows));
}

}  // namespace idedit
