// Copyright 2026 The o3w Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "o3w/tensor.hpp"

namespace o3w {

/// Lowercases and NFC-normalizes a UTF-8 word. Throws ParseError on invalid
/// UTF-8.
std::string normalize_word(const std::string& word);

/// Ordered, non-empty list of query words with no duplicates after
/// normalization.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> entries);

    const std::vector<std::string>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    const std::string& operator[](std::size_t i) const { return entries_[i]; }
    /// Index of a word (normalized lookup), or -1.
    std::ptrdiff_t find(const std::string& word) const;

    /// Returns a new vocabulary with `extra` appended after the current words.
    Vocabulary appended(const std::vector<std::string>& extra) const;

private:
    std::vector<std::string> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Vocabulary plus its m×d embedding matrix (row j embeds entry j).
struct VocabEmbeddings {
    Vocabulary vocab;
    Tensor matrix;
    bool normalized = false;

    std::size_t dim() const { return matrix.cols(); }
    /// Rows for the given words in the given order.
    VocabEmbeddings select(const std::vector<std::string>& words) const;
    /// Appends rows of `extra` (same d) after the existing rows.
    VocabEmbeddings appended(const VocabEmbeddings& extra) const;
};

/// Scales each row to unit L2 norm (zero rows are left unchanged).
void l2_normalize_rows(Tensor& matrix);

/// Reads an OVEMB file. Errors name the offending line.
VocabEmbeddings load_embeddings(const std::filesystem::path& path, bool normalize = true);
void save_embeddings(const VocabEmbeddings& emb, const std::filesystem::path& path);

/// Deterministic pseudo-random unit vector for (word, seed).
std::vector<double> hash_embed(const std::string& word, std::size_t dim, std::uint64_t seed);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual std::optional<std::vector<double>> lookup(const std::string& word) const = 0;
};

class HashProvider final : public EmbeddingProvider {
public:
    HashProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
    std::size_t dim() const override { return dim_; }
    std::optional<std::vector<double>> lookup(const std::string& word) const override
    {
        return hash_embed(word, dim_, seed_);
    }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

class FileProvider final : public EmbeddingProvider {
public:
    explicit FileProvider(VocabEmbeddings table) : table_(std::move(table)) {}
    std::size_t dim() const override { return table_.dim(); }
    std::optional<std::vector<double>> lookup(const std::string& word) const override;

private:
    VocabEmbeddings table_;
};

/// Embeds every vocabulary entry. Throws UnknownWordError listing all words
/// the provider lacks.
VocabEmbeddings embed_vocabulary(const Vocabulary& vocab, const EmbeddingProvider& provider);

}  // namespace o3w
