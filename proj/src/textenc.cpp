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

#include "o3w/textenc.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "o3w/error.hpp"
#include "o3w/random.hpp"

namespace o3w {

std::string normalize_word(const std::string& word)
{
    UErrorCode status = U_ZERO_ERROR;
    int32_t needed = 0;
    u_strFromUTF8(nullptr, 0, &needed, word.data(), static_cast<int32_t>(word.size()), &status);
    if (status != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(status)) throw ParseError("word is not valid UTF-8: " + word);

    icu::UnicodeString text = icu::UnicodeString::fromUTF8(word);
    text.toLower(icu::Locale::getRoot());
    status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    icu::UnicodeString normalized = nfc->normalize(text, status);
    if (U_FAILURE(status)) throw ParseError("cannot normalize word: " + word);
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> entries) : entries_(std::move(entries))
{
    if (entries_.empty()) throw ConfigError("vocabulary must not be empty");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const std::string key = normalize_word(entries_[i]);
        if (key.empty()) throw ConfigError("vocabulary entry " + std::to_string(i) + " is empty");
        if (!index_.emplace(key, i).second) throw ConfigError("duplicate vocabulary entry: " + entries_[i]);
    }
}

std::ptrdiff_t Vocabulary::find(const std::string& word) const
{
    const auto it = index_.find(normalize_word(word));
    return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

Vocabulary Vocabulary::appended(const std::vector<std::string>& extra) const
{
    std::vector<std::string> all = entries_;
    all.insert(all.end(), extra.begin(), extra.end());
    return Vocabulary(std::move(all));
}

VocabEmbeddings VocabEmbeddings::select(const std::vector<std::string>& words) const
{
    const std::size_t d = dim();
    Tensor rows({words.size(), d});
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::ptrdiff_t j = vocab.find(words[i]);
        if (j < 0) {
            missing.push_back(words[i]);
            continue;
        }
        const auto src = matrix.row(static_cast<std::size_t>(j));
        std::copy(src.begin(), src.end(), rows.row(i).begin());
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& w : missing) list += (list.empty() ? "" : ", ") + w;
        throw UnknownWordError("unknown word(s): " + list);
    }
    return VocabEmbeddings{Vocabulary(words), std::move(rows), normalized};
}

VocabEmbeddings VocabEmbeddings::appended(const VocabEmbeddings& extra) const
{
    if (extra.dim() != dim()) throw DimensionError("appended embeddings have a different dimension");
    const std::size_t m = matrix.rows(), k = extra.matrix.rows(), d = dim();
    std::vector<double> data(matrix.storage());
    data.insert(data.end(), extra.matrix.storage().begin(), extra.matrix.storage().end());
    return VocabEmbeddings{vocab.appended(extra.vocab.entries()), Tensor({m + k, d}, std::move(data)),
                           normalized && extra.normalized};
}

void l2_normalize_rows(Tensor& matrix)
{
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        auto row = matrix.row(r);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        if (sq <= 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : row) v *= inv;
    }
}

namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string& what)
{
    throw ParseError("OVEMB line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_spaces(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::size_t parse_count(const std::string& tok, std::size_t line, const char* what)
{
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail_at(line, std::string("bad ") + what + " '" + tok + "'");
    return v;
}

}  // namespace

VocabEmbeddings load_embeddings(const std::filesystem::path& path, bool normalize)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open embedding file " + path.string());

    std::string line;
    if (!std::getline(in, line)) fail_at(1, "missing header");
    const auto header = split_spaces(line);
    if (header.size() != 4 || header[0] != "OVEMB") fail_at(1, "magic mismatch, expected 'OVEMB 1 <m> <d>'");
    if (header[1] != "1") fail_at(1, "unsupported version " + header[1]);
    const std::size_t m = parse_count(header[2], 1, "row count");
    const std::size_t d = parse_count(header[3], 1, "dimension");
    if (m == 0 || d == 0) fail_at(1, "row count and dimension must be positive");

    std::vector<std::string> words;
    std::vector<double> data;
    data.reserve(m * d);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (words.size() == m) fail_at(lineno, "more rows than the header's m=" + std::to_string(m));
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) fail_at(lineno, "expected '<word><TAB><values>'");
        words.push_back(line.substr(0, tab));
        const auto values = split_spaces(line.substr(tab + 1));
        if (values.size() != d) {
            fail_at(lineno, "expected " + std::to_string(d) + " values, found " + std::to_string(values.size()));
        }
        for (const auto& tok : values) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) fail_at(lineno, "bad number '" + tok + "'");
            if (!std::isfinite(v)) fail_at(lineno, "non-finite value '" + tok + "'");
            data.push_back(v);
        }
    }
    if (words.size() != m) {
        fail_at(lineno, "found " + std::to_string(words.size()) + " rows, header declares " + std::to_string(m));
    }

    std::optional<Vocabulary> vocab;
    try {
        vocab.emplace(words);
    } catch (const ConfigError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    Tensor matrix({m, d}, std::move(data));
    if (normalize) l2_normalize_rows(matrix);
    return VocabEmbeddings{std::move(*vocab), std::move(matrix), normalize};
}

void save_embeddings(const VocabEmbeddings& emb, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write embedding file " + path.string());
    const std::size_t m = emb.matrix.rows(), d = emb.matrix.cols();
    out << "OVEMB 1 " << m << ' ' << d << '\n';
    char buf[64];
    for (std::size_t r = 0; r < m; ++r) {
        out << emb.vocab[r] << '\t';
        for (std::size_t c = 0; c < d; ++c) {
            // shortest representation that parses back to the same double
            const auto res = std::to_chars(buf, buf + sizeof(buf), emb.matrix.at(r, c));
            if (c) out << ' ';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out) throw Error("failed writing embedding file " + path.string());
}

std::vector<double> hash_embed(const std::string& word, std::size_t dim, std::uint64_t seed)
{
    Rng rng(hash_combine(fnv1a64(normalize_word(word)), seed));
    std::vector<double> v(dim);
    double sq = 0.0;
    do {
        sq = 0.0;
        for (double& x : v) {
            x = rng.normal();
            sq += x * x;
        }
    } while (sq == 0.0);
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
    return v;
}

std::optional<std::vector<double>> FileProvider::lookup(const std::string& word) const
{
    const std::ptrdiff_t j = table_.vocab.find(word);
    if (j < 0) return std::nullopt;
    const auto row = table_.matrix.row(static_cast<std::size_t>(j));
    return std::vector<double>(row.begin(), row.end());
}

VocabEmbeddings embed_vocabulary(const Vocabulary& vocab, const EmbeddingProvider& provider)
{
    const std::size_t d = provider.dim();
    if (d == 0) throw ConfigError("embedding dimension must be positive");
    Tensor matrix({vocab.size(), d});
    std::string missing;
    for (std::size_t j = 0; j < vocab.size(); ++j) {
        const auto e = provider.lookup(vocab[j]);
        if (!e) {
            missing += (missing.empty() ? "" : ", ") + vocab[j];
            continue;
        }
        std::copy(e->begin(), e->end(), matrix.row(j).begin());
    }
    if (!missing.empty()) throw UnknownWordError("provider has no embedding for: " + missing);
    bool unit = true;
    for (std::size_t j = 0; j < matrix.rows() && unit; ++j) {
        double sq = 0.0;
        for (double v : matrix.row(j)) sq += v * v;
        unit = std::abs(std::sqrt(sq) - 1.0) <= 1e-9;
    }
    return VocabEmbeddings{vocab, std::move(matrix), unit};
}

}  // namespace o3w
