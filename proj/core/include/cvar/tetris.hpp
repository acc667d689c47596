#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cvar/model.hpp"

namespace cvar {

// Desk-scale Tetris with placement actions: an action is a (rotation,
// column) drop of the current piece. Per step the reward is the configured
// line-clear score; the episode ends when a piece lands above the board top
// or at the step cap. Piece sequence is i.i.d. uniform over the configured
// set.
struct TetrisConfig {
  int width = 6;
  int height = 12;
  std::vector<char> pieces = {'I', 'O', 'L', 'S'};  // subset of I O T S Z J L
  std::array<double, 4> line_scores = {1.0, 4.0, 8.0, 16.0};
  std::int64_t step_cap = 300;
  double smoothing = 0.0;  // uniform reward noise half-width, off by default

  void validate() const;
};

// Column-major bitboard; bit y of column x is the cell at height y (0 =
// floor). Cells may transiently sit above `height` when a piece overflows.
class TetrisBoard {
 public:
  TetrisBoard(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint64_t column(int x) const { return cols_[static_cast<std::size_t>(x)]; }
  bool occupied(int x, int y) const { return (cols_[static_cast<std::size_t>(x)] >> y) & 1u; }
  void fill(int x, int y) { cols_[static_cast<std::size_t>(x)] |= std::uint64_t{1} << y; }
  void or_column(int x, std::uint64_t mask) { cols_[static_cast<std::size_t>(x)] |= mask; }

  int column_height(int x) const;
  int aggregate_height() const;

  // Empty cells strictly below the top occupied cell of their column.
  int hole_count() const;

  // Number of unoccupied cells whose left and right neighbors are both
  // occupied, with the board edges counting as occupied. A depth-d gap
  // flanked by full columns contributes d.
  int well_cell_count() const;

  // Rows (within the playfield) that are completely occupied.
  std::uint64_t full_row_mask() const;

  // Removes the given rows, dropping everything above; returns the count.
  int clear_rows(std::uint64_t row_mask);

  // Fixture construction from ascii art, top row first; '#' or 'X' marks an
  // occupied cell. Rows shorter than the width are padded with empties.
  static TetrisBoard from_rows(int width, int height, const std::vector<std::string>& rows);
  std::vector<std::string> to_rows() const;

  bool operator==(const TetrisBoard&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint64_t> cols_;
};

struct PieceRotation {
  int width = 0;
  int height = 0;
  std::array<std::uint64_t, 4> col_masks{};  // relative cells per piece column
  std::array<int, 4> bottom{};               // lowest cell offset per piece column
};

struct Piece {
  char name = '?';
  std::vector<PieceRotation> rotations;
};

// The seven standard tetrominoes.
const std::vector<Piece>& piece_table();
const Piece& piece_by_name(char name);

struct Placement {
  int rotation = 0;
  int column = 0;
};

// All placements with horizontal fit for the piece on a board of this
// width. Placements that would land above the top are included (choosing
// one ends the episode); only out-of-bounds ones are masked.
std::vector<Placement> enumerate_placements(int board_width, const Piece& piece);

struct PlacementResult {
  TetrisBoard board;     // afterstate with full rows cleared
  int landing_row = 0;   // y of the piece's lowest cell
  int rows_cleared = 0;
  bool overflow = false;  // piece extends past the board top: episode ends
  double reward = 0.0;    // line-clear score
};

PlacementResult apply_placement(const TetrisBoard& board, const TetrisConfig& config,
                                const Piece& piece, const Placement& placement);

// Afterstate feature vector of a placement:
//   [ landing height, rows cleared, holes, aggregate column height,
//     well cells, bias ]
// with the four cell/row counts divided by the board height to keep softmax
// logits well scaled.
Eigen::VectorXd tetris_features(const TetrisBoard& board, const TetrisConfig& config,
                                const Piece& piece, const Placement& placement);

int tetris_feature_dim();
const std::vector<std::string>& tetris_feature_names();

// Tetris as a sampleable model: a draw plays one episode under the softmax
// placement policy softmax(features . theta) and returns the total score
// with the accumulated policy score vector.
class TetrisModel final : public Model {
 public:
  explicit TetrisModel(TetrisConfig config);

  int param_dim() const override { return tetris_feature_dim(); }
  ScoredSample draw(const ParamVector& theta, Rng& rng) const override;

  struct EpisodeStats {
    std::int64_t steps = 0;
    int rows_cleared = 0;
    double reward_from_clears = 0.0;  // pre-smoothing score total
    bool died = false;                // ended by overflow rather than the step cap
  };
  ScoredSample draw_with_stats(const ParamVector& theta, Rng& rng, EpisodeStats* stats) const;

  const TetrisConfig& config() const { return config_; }

 private:
  TetrisConfig config_;
  std::vector<const Piece*> pieces_;
};

}  // namespace cvar
