// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cmm/embedding_store.hpp"
#include "cmm/matrix.hpp"

namespace cmm {

/// Class prototypes as [d × N] column matrices. `t_init` is frozen; `t_ft` is
/// the trainable copy and is never re-normalized in place.
struct TextPrototypes {
  Matrix t_init;
  Matrix t_ft;
  Matrix grad_t;
};

/// Column k = normalize(mean of the L template rows of class k).
TextPrototypes build_text_prototypes(const EmbeddingCache& cache);

}  // namespace cmm
