// Copyright 2026 The AnoShift Toolkit Authors
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

// Desk-scale defaults: a synthetic corpus and a model small enough to run
// the whole pipeline on one core in minutes. The CLI starts from these.

#ifndef ANOSHIFT_DESK_HPP_
#define ANOSHIFT_DESK_HPP_

#include "anoshift/ingest.hpp"
#include "anoshift/maskedmodel.hpp"
#include "anoshift/protocol.hpp"

namespace anoshift::desk {

// 6 years x 4 months; the anomaly swap happens in the last year.
inline SyntheticConfig synthetic_config(std::uint64_t seed = 0) {
  SyntheticConfig c;
  c.n_years = 6;
  c.start_year = 2006;
  c.months_per_year = 4;
  c.normals_per_month = 200;
  c.drift_rate = 0.2;
  c.swap_year = 5;
  c.seed = seed;
  return c;
}

// 3 TRAIN years, 2 NEAR, 1 FAR.
inline SplitConfig split_config(std::uint64_t seed = 0) {
  SplitConfig s;
  s.train_years = {2006, 2007, 2008};
  s.near_years = {2009, 2010};
  s.far_years = {2011};
  s.normals_per_month_train = 150;
  s.normals_per_month_iid = 50;
  s.seed = seed;
  return s;
}

// Reference shape scaled down; intermediate keeps the 1.6x ratio.
inline mlm::ModelConfig model_config() {
  mlm::ModelConfig c;
  c.n_layers = 2;
  c.hidden = 32;
  c.intermediate = 51;
  c.n_heads = 2;
  c.epochs = 20;
  c.learning_rate = 1e-3;
  return c;
}

// The full-size encoder: 2 layers, hidden 120, intermediate 192, 6 heads.
inline mlm::ModelConfig reference_model_config() {
  mlm::ModelConfig c;
  c.n_layers = 2;
  c.hidden = 120;
  c.intermediate = 192;
  c.n_heads = 6;
  return c;
}

}  // namespace anoshift::desk

#endif  // ANOSHIFT_DESK_HPP_
