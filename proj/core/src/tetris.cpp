#include "cvar/tetris.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace cvar {

void TetrisConfig::validate() const {
  if (width < 4) throw std::invalid_argument("tetris board width must be >= 4");
  if (height < 6 || height > 32) throw std::invalid_argument("tetris board height must be in [6, 32]");
  if (pieces.empty()) throw std::invalid_argument("tetris needs at least one piece");
  for (char p : pieces) piece_by_name(p);  // throws on unknown names
  if (step_cap < 1) throw std::invalid_argument("step cap must be >= 1");
  if (smoothing < 0.0) throw std::invalid_argument("smoothing half-width must be >= 0");
  for (double s : line_scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("line scores must be finite");
  }
}

TetrisBoard::TetrisBoard(int width, int height)
    : width_(width), height_(height), cols_(static_cast<std::size_t>(width), 0) {}

int TetrisBoard::column_height(int x) const {
  return std::bit_width(cols_[static_cast<std::size_t>(x)]);
}

int TetrisBoard::aggregate_height() const {
  int sum = 0;
  for (int x = 0; x < width_; ++x) sum += column_height(x);
  return sum;
}

int TetrisBoard::hole_count() const {
  int holes = 0;
  for (int x = 0; x < width_; ++x) {
    const std::uint64_t col = cols_[static_cast<std::size_t>(x)];
    const int h = std::bit_width(col);
    if (h == 0) continue;
    const std::uint64_t below_top = (std::uint64_t{1} << (h - 1)) - 1;
    holes += std::popcount(~col & below_top);
  }
  return holes;
}

int TetrisBoard::well_cell_count() const {
  const std::uint64_t playfield = (height_ >= 64) ? ~std::uint64_t{0}
                                                  : (std::uint64_t{1} << height_) - 1;
  int cells = 0;
  for (int x = 0; x < width_; ++x) {
    const std::uint64_t left = (x == 0) ? playfield : cols_[static_cast<std::size_t>(x - 1)];
    const std::uint64_t right =
        (x == width_ - 1) ? playfield : cols_[static_cast<std::size_t>(x + 1)];
    cells += std::popcount(~cols_[static_cast<std::size_t>(x)] & left & right & playfield);
  }
  return cells;
}

std::uint64_t TetrisBoard::full_row_mask() const {
  std::uint64_t mask = (height_ >= 64) ? ~std::uint64_t{0}
                                       : (std::uint64_t{1} << height_) - 1;
  for (int x = 0; x < width_; ++x) mask &= cols_[static_cast<std::size_t>(x)];
  return mask;
}

int TetrisBoard::clear_rows(std::uint64_t row_mask) {
  if (row_mask == 0) return 0;
  const int cleared = std::popcount(row_mask);
  // Compact from the highest cleared row down so bit positions stay valid.
  for (int y = 63; y >= 0; --y) {
    if (!((row_mask >> y) & 1u)) continue;
    for (auto& col : cols_) {
      const std::uint64_t below = col & ((std::uint64_t{1} << y) - 1);
      const std::uint64_t above = (col >> (y + 1)) << y;
      col = below | above;
    }
  }
  return cleared;
}

TetrisBoard TetrisBoard::from_rows(int width, int height,
                                   const std::vector<std::string>& rows) {
  TetrisBoard board(width, height);
  const int n = static_cast<int>(rows.size());
  for (int r = 0; r < n; ++r) {
    const int y = n - 1 - r;  // top row first
    for (int x = 0; x < width && x < static_cast<int>(rows[r].size()); ++x) {
      if (rows[r][static_cast<std::size_t>(x)] == '#' ||
          rows[r][static_cast<std::size_t>(x)] == 'X') {
        board.fill(x, y);
      }
    }
  }
  return board;
}

std::vector<std::string> TetrisBoard::to_rows() const {
  std::vector<std::string> rows;
  for (int y = height_ - 1; y >= 0; --y) {
    std::string row(static_cast<std::size_t>(width_), '.');
    for (int x = 0; x < width_; ++x) {
      if (occupied(x, y)) row[static_cast<std::size_t>(x)] = '#';
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// Rotations given as ascii grids, top row first.
PieceRotation parse_rotation(const std::vector<std::string>& grid) {
  PieceRotation rot;
  rot.height = static_cast<int>(grid.size());
  for (const auto& row : grid) rot.width = std::max(rot.width, static_cast<int>(row.size()));
  rot.bottom.fill(-1);
  for (int r = 0; r < rot.height; ++r) {
    const int y = rot.height - 1 - r;
    for (int x = 0; x < static_cast<int>(grid[static_cast<std::size_t>(r)].size()); ++x) {
      if (grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(x)] != 'X') continue;
      rot.col_masks[static_cast<std::size_t>(x)] |= std::uint64_t{1} << y;
    }
  }
  for (int x = 0; x < rot.width; ++x) {
    rot.bottom[static_cast<std::size_t>(x)] =
        std::countr_zero(rot.col_masks[static_cast<std::size_t>(x)]);
  }
  return rot;
}

Piece make_piece(char name, const std::vector<std::vector<std::string>>& grids) {
  Piece piece;
  piece.name = name;
  for (const auto& grid : grids) piece.rotations.push_back(parse_rotation(grid));
  return piece;
}

std::vector<Piece> build_piece_table() {
  std::vector<Piece> pieces;
  pieces.push_back(make_piece('I', {{"XXXX"}, {"X", "X", "X", "X"}}));
  pieces.push_back(make_piece('O', {{"XX", "XX"}}));
  pieces.push_back(make_piece('T', {{".X.", "XXX"},
                                    {"X.", "XX", "X."},
                                    {"XXX", ".X."},
                                    {".X", "XX", ".X"}}));
  pieces.push_back(make_piece('S', {{".XX", "XX."}, {"X.", "XX", ".X"}}));
  pieces.push_back(make_piece('Z', {{"XX.", ".XX"}, {".X", "XX", "X."}}));
  pieces.push_back(make_piece('J', {{"X..", "XXX"},
                                    {"XX", "X.", "X."},
                                    {"XXX", "..X"},
                                    {".X", ".X", "XX"}}));
  pieces.push_back(make_piece('L', {{"..X", "XXX"},
                                    {"X.", "X.", "XX"},
                                    {"XXX", "X.."},
                                    {"XX", ".X", ".X"}}));
  return pieces;
}

}  // namespace

const std::vector<Piece>& piece_table() {
  static const std::vector<Piece> table = build_piece_table();
  return table;
}

const Piece& piece_by_name(char name) {
  for (const auto& piece : piece_table()) {
    if (piece.name == name) return piece;
  }
  throw std::invalid_argument(std::string("unknown tetromino: ") + name);
}

std::vector<Placement> enumerate_placements(int board_width, const Piece& piece) {
  std::vector<Placement> placements;
  for (int r = 0; r < static_cast<int>(piece.rotations.size()); ++r) {
    const int w = piece.rotations[static_cast<std::size_t>(r)].width;
    for (int c = 0; c + w <= board_width; ++c) placements.push_back({r, c});
  }
  return placements;
}

PlacementResult apply_placement(const TetrisBoard& board, const TetrisConfig& config,
                                const Piece& piece, const Placement& placement) {
  const auto& rot = piece.rotations[static_cast<std::size_t>(placement.rotation)];

  int landing = 0;
  for (int j = 0; j < rot.width; ++j) {
    landing = std::max(landing, board.column_height(placement.column + j) -
                                    rot.bottom[static_cast<std::size_t>(j)]);
  }

  PlacementResult result{board, landing, 0, false, 0.0};
  for (int j = 0; j < rot.width; ++j) {
    result.board.or_column(placement.column + j,
                           rot.col_masks[static_cast<std::size_t>(j)] << landing);
  }
  result.overflow = landing + rot.height > config.height;
  result.rows_cleared = result.board.clear_rows(result.board.full_row_mask());
  if (result.rows_cleared > 0) {
    result.reward = config.line_scores[static_cast<std::size_t>(result.rows_cleared - 1)];
  }
  return result;
}

int tetris_feature_dim() { return 6; }

const std::vector<std::string>& tetris_feature_names() {
  static const std::vector<std::string> names = {"landing_height", "rows_cleared", "holes",
                                                 "agg_height",     "board_well",   "bias"};
  return names;
}

Eigen::VectorXd tetris_features(const TetrisBoard& board, const TetrisConfig& config,
                                const Piece& piece, const Placement& placement) {
  const PlacementResult result = apply_placement(board, config, piece, placement);
  const double h = static_cast<double>(config.height);
  Eigen::VectorXd phi(tetris_feature_dim());
  phi[0] = static_cast<double>(result.landing_row) / h;
  phi[1] = static_cast<double>(result.rows_cleared);
  phi[2] = static_cast<double>(result.board.hole_count()) / h;
  phi[3] = static_cast<double>(result.board.aggregate_height()) / h;
  phi[4] = static_cast<double>(result.board.well_cell_count()) / h;
  phi[5] = 1.0;
  return phi;
}

TetrisModel::TetrisModel(TetrisConfig config) : config_(std::move(config)) {
  config_.validate();
  for (char name : config_.pieces) pieces_.push_back(&piece_by_name(name));
}

ScoredSample TetrisModel::draw(const ParamVector& theta, Rng& rng) const {
  return draw_with_stats(theta, rng, nullptr);
}

ScoredSample TetrisModel::draw_with_stats(const ParamVector& theta, Rng& rng,
                                          EpisodeStats* stats) const {
  validate_param_vector(*this, theta);
  const int k = tetris_feature_dim();

  TetrisBoard board(config_.width, config_.height);
  double total = 0.0;
  Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
  EpisodeStats episode;

  std::vector<PlacementResult> outcomes;
  std::vector<Eigen::VectorXd> feats;
  for (std::int64_t step = 0; step < config_.step_cap; ++step) {
    const int piece_idx =
        std::uniform_int_distribution<int>(0, static_cast<int>(pieces_.size()) - 1)(rng);
    const Piece& piece = *pieces_[static_cast<std::size_t>(piece_idx)];
    const auto placements = enumerate_placements(config_.width, piece);

    outcomes.clear();
    feats.clear();
    Eigen::VectorXd logits(static_cast<Eigen::Index>(placements.size()));
    for (std::size_t i = 0; i < placements.size(); ++i) {
      PlacementResult result = apply_placement(board, config_, piece, placements[i]);
      const double fh = static_cast<double>(config_.height);
      Eigen::VectorXd phi(k);
      phi[0] = static_cast<double>(result.landing_row) / fh;
      phi[1] = static_cast<double>(result.rows_cleared);
      phi[2] = static_cast<double>(result.board.hole_count()) / fh;
      phi[3] = static_cast<double>(result.board.aggregate_height()) / fh;
      phi[4] = static_cast<double>(result.board.well_cell_count()) / fh;
      phi[5] = 1.0;
      logits[static_cast<Eigen::Index>(i)] = phi.dot(theta);
      feats.push_back(std::move(phi));
      outcomes.push_back(std::move(result));
    }

    const Eigen::VectorXd probs = softmax(logits);
    const int a = draw_categorical(probs, static_cast<int>(probs.size()), rng);

    Eigen::VectorXd mean_phi = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      mean_phi += probs[static_cast<Eigen::Index>(i)] * feats[i];
    }
    score += feats[static_cast<std::size_t>(a)] - mean_phi;

    double rho = outcomes[static_cast<std::size_t>(a)].reward;
    episode.reward_from_clears += rho;
    if (config_.smoothing > 0.0) rho += draw_symmetric_uniform(rng, config_.smoothing);
    total += rho;
    episode.rows_cleared += outcomes[static_cast<std::size_t>(a)].rows_cleared;
    episode.steps += 1;

    if (outcomes[static_cast<std::size_t>(a)].overflow) {
      episode.died = true;
      break;
    }
    board = outcomes[static_cast<std::size_t>(a)].board;
  }

  if (stats != nullptr) *stats = episode;
  ScoredSample sample;
  sample.reward = total;
  sample.score = std::move(score);
  return sample;
}

}  // namespace cvar
