#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dtts/common.hpp"
#include "dtts/rng.hpp"

namespace dtts::corpus {

// One utterance per line, tab-separated:
// id <TAB> wav path <TAB> IPA tokens (space-separated) <TAB> language id <TAB> speaker id
struct Utterance {
  std::string id;
  std::string wav_path;
  std::vector<std::string> tokens;
  int lang = 0;
  int spk = 0;
};

struct CorpusManifest {
  std::vector<Utterance> utterances;

  static CorpusManifest load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest: " + path);
    CorpusManifest m;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, '\t')) fields.push_back(field);
      if (fields.size() != 5)
        throw InputError("manifest line " + std::to_string(line_no) +
                         ": expected 5 tab-separated fields");
      Utterance u;
      u.id = fields[0];
      u.wav_path = fields[1];
      std::stringstream ts(fields[2]);
      std::string tok;
      while (ts >> tok) u.tokens.push_back(tok);
      u.lang = std::stoi(fields[3]);
      u.spk = std::stoi(fields[4]);
      if (u.tokens.empty())
        throw InputError("manifest line " + std::to_string(line_no) + ": empty token string");
      m.utterances.push_back(std::move(u));
    }
    m.validate();
    return m;
  }

  void validate() const {
    std::set<std::string> seen;
    std::set<int> langs, spks;
    for (const auto& u : utterances) {
      if (!seen.insert(u.id).second)
        throw InputError("duplicate utterance id: " + u.id);
      require(u.lang >= 0 && u.spk >= 0, "negative language/speaker id: " + u.id);
      langs.insert(u.lang);
      spks.insert(u.spk);
    }
    // Ids must be dense 0..N-1.
    int expect = 0;
    for (int l : langs)
      require(l == expect++, "language ids must be dense integers starting at 0");
    expect = 0;
    for (int s : spks)
      require(s == expect++, "speaker ids must be dense integers starting at 0");
  }

  int num_languages() const {
    int n = 0;
    for (const auto& u : utterances) n = std::max(n, u.lang + 1);
    return n;
  }

  int num_speakers() const {
    int n = 0;
    for (const auto& u : utterances) n = std::max(n, u.spk + 1);
    return n;
  }
};

// Explicit symbol inventory, one symbol per line.
struct Vocabulary {
  std::vector<std::string> symbols;
  std::map<std::string, int> index;

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open vocabulary: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      v.add(line);
    }
    require(!v.symbols.empty(), "vocabulary is empty: " + path);
    return v;
  }

  static Vocabulary from_config_text(const std::string& text) {
    Vocabulary v;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
      if (line.rfind("vocab_symbol=", 0) == 0) v.add(line.substr(13));
    return v;
  }

  void add(const std::string& sym) {
    if (index.count(sym)) return;
    index[sym] = static_cast<int>(symbols.size());
    symbols.push_back(sym);
  }

  int id(const std::string& sym) const {
    auto it = index.find(sym);
    if (it == index.end()) throw LookupError("unknown IPA symbol: '" + sym + "'");
    return it->second;
  }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write vocabulary: " + path);
    for (const auto& s : symbols) f << s << "\n";
  }
};

struct SplitSpec {
  double train = 0.8, valid = 0.1, test = 0.1;

  void validate() const {
    if (std::fabs(train + valid + test - 1.0) > 1e-9)
      throw ConfigError("split fractions must sum to 1");
  }
};

struct Splits {
  std::vector<std::string> train, valid, test;
};

// Per-speaker split with a seeded shuffle; every speaker contributes to all
// three sets when it has enough utterances.
inline Splits split_per_speaker(const CorpusManifest& m, const SplitSpec& spec,
                                uint64_t seed) {
  spec.validate();
  std::map<int, std::vector<std::string>> by_speaker;
  for (const auto& u : m.utterances) by_speaker[u.spk].push_back(u.id);
  Splits out;
  for (auto& [spk, ids] : by_speaker) {
    RngStream rng = RngStream::derive(seed, {0x73706c69ULL, static_cast<uint64_t>(spk)});
    std::vector<size_t> order;
    rng.permutation(ids.size(), order);
    const size_t n = ids.size();
    size_t n_valid = static_cast<size_t>(spec.valid * static_cast<double>(n) + 0.5);
    size_t n_test = static_cast<size_t>(spec.test * static_cast<double>(n) + 0.5);
    if (n >= 3) {
      n_valid = std::max<size_t>(n_valid, 1);
      n_test = std::max<size_t>(n_test, 1);
    }
    for (size_t i = 0; i < n; ++i) {
      const std::string& id = ids[order[i]];
      if (i < n_valid)
        out.valid.push_back(id);
      else if (i < n_valid + n_test)
        out.test.push_back(id);
      else
        out.train.push_back(id);
    }
  }
  return out;
}

}  // namespace dtts::corpus
