#pragma once

#include <filesystem>

#include "dml/embedcore.hpp"

namespace dml {

struct LabeledEmbeddings {
  EmbeddingSet embeddings;
  LabelSet labels;
};

// CSV: header `label,f0,...,f{d-1}`, one sample per row.
LabeledEmbeddings read_embeddings_csv(const std::filesystem::path& path);
void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& e, const LabelSet& labels);

// Binary "EMB1": magic, u32 n, u32 d, n u32 labels, n*d f32 values row-major,
// all little-endian. Values are narrowed to f32 on write.
LabeledEmbeddings read_embeddings_binary(const std::filesystem::path& path);
void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingSet& e, const LabelSet& labels);

/// Dispatches on the leading magic bytes.
LabeledEmbeddings read_embeddings(const std::filesystem::path& path);

}  // namespace dml
