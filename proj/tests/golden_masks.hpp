#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pvdelay::testing {

// Nonzero pattern of the two-PV closed loop (states: 7 subsystem states and
// one outer-loop integrator per PV, ordered by PV). Subsystem blocks sit on
// the diagonal of A, controller rows are driven by both PV currents, the
// delayed input paths occupy the subsystem rows of A_d, and F carries one
// V_oc and one reference column per PV.
struct GoldenMasks {
  std::vector<std::string> a;
  std::vector<std::string> a_d;
  std::vector<std::string> f;
  std::vector<std::string> c;
};

inline const GoldenMasks& two_pv_golden() {
  static const GoldenMasks g{
      {
          "......X.........",
          "X.....X.........",
          "XXX...X.........",
          "..X.X...........",
          "..XXX...........",
          "....XX..........",
          ".....XX.........",
          ".............X..",
          ".......X.....X..",
          ".......XXX...X..",
          ".........X.X....",
          ".........XXX....",
          "...........XX...",
          "............XX..",
          "....X......X....",
          "....X......X....",
      },
      {
          "....X......X..X.",
          "....X......X..X.",
          "....X......X..X.",
          "................",
          "................",
          "................",
          "................",
          "....X......X...X",
          "....X......X...X",
          "....X......X...X",
          "................",
          "................",
          "................",
          "................",
          "................",
          "................",
      },
      {
          "XX..", "XX..", "XX..", "....",
          "....", "....", "X...", "..XX",
          "..XX", "..XX", "....", "....",
          "....", "..X.", ".X..", "...X",
      },
      {
          "....X...........",
          "...........X....",
          "................",
          "................",
      },
  };
  return g;
}

inline std::vector<std::string> mask(const Eigen::MatrixXd& m) {
  std::vector<std::string> rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::string r;
    for (Eigen::Index j = 0; j < m.cols(); ++j) r += m(i, j) != 0.0 ? 'X' : '.';
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pvdelay::testing
