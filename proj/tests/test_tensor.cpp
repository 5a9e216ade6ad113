// Copyright 2026 The tclif-eprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "tclif.hpp"

namespace {

using namespace tclif;

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.flat()) v = u(rng);
  return m;
}

TEST(Matrix, RowMajorIndexing) {
  Matrix m(2, 3);
  m(1, 2) = 7.0;
  EXPECT_EQ(m.flat()[5], 7.0);
  EXPECT_EQ(m.row(1)[2], 7.0);
  EXPECT_EQ(m.size(), 6u);
}

TEST(Matmul, HelpersMatchLoops) {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 3, 4), w = random_matrix(rng, 5, 4);
  Matrix out(3, 5);
  add_matmul_transposed(out, x, w);
  for (int b = 0; b < 3; ++b)
    for (int j = 0; j < 5; ++j) {
      double want = 0.0;
      for (int i = 0; i < 4; ++i) want += w(j, i) * x(b, i);
      EXPECT_NEAR(out(b, j), want, 1e-14);
    }
  const Matrix d = random_matrix(rng, 3, 5);
  Matrix back(3, 4);
  add_matmul(back, d, w);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 4; ++i) {
      double want = 0.0;
      for (int j = 0; j < 5; ++j) want += d(b, j) * w(j, i);
      EXPECT_NEAR(back(b, i), want, 1e-14);
    }
  Matrix g(5, 4);
  add_outer_batch(g, d, x);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 4; ++i) {
      double want = 0.0;
      for (int b = 0; b < 3; ++b) want += d(b, j) * x(b, i);
      EXPECT_NEAR(g(j, i), want, 1e-14);
    }
}

TEST(Matmul, RejectsMismatchedShapes) {
  Matrix out(2, 3);
  EXPECT_THROW(add_matmul_transposed(out, Matrix(2, 4), Matrix(3, 5)), ShapeError);
}

TEST(MemoryMeter, CountsMatrixStorage) {
  const std::size_t before = MemoryMeter::current_bytes();
  {
    Matrix m(10, 20);
    EXPECT_EQ(MemoryMeter::current_bytes() - before, 200 * sizeof(double));
    MemoryMeter::reset_peak();
    { Matrix tmp(5, 5); }
    EXPECT_EQ(MemoryMeter::peak_bytes() - before, 225 * sizeof(double));
  }
  EXPECT_EQ(MemoryMeter::current_bytes(), before);
}

TEST(MaxRelError, ScalesByReferenceMaximum) {
  const std::vector<double> a{1.0, 2.1}, b{1.0, 2.0};
  EXPECT_NEAR(max_rel_error(a, b), 0.05, 1e-12);
}

}  // namespace
