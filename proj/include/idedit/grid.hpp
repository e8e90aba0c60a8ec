#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "idedit/editing.hpp"
#include "idedit/image.hpp"

namespace idedit {

struct GridRow {
    std::string label;
    EditTrajectory trajectory;
};

// Contact sheet: one row per trajectory, one column per alpha, with a label
// gutter on the left and alpha captions on top. All rows must share alphas
// and tile size.
ImageTensor compose_grid(const std::vector<GridRow>& rows);

// Writes compose_grid(rows) as PNG. Throws IoError when the path is unwritable.
void emit_grids(const std::vector<GridRow>& rows, const std::filesystem::path& path);

// 5x7 bitmap text, upper-cased; unknown glyphs render blank.
void draw_text(ImageTensor& canvas, int x, int y, const std::string& text, float value = 0.0f);
int text_width(const std::string& text);

}  // namespace idedit
