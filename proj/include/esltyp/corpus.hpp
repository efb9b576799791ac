#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "esltyp/util.hpp"

namespace esltyp {

// One token of a dependency-annotated sentence. `head` is 1-based into the
// same sentence, 0 for the root.
struct Token {
  int index = 0;
  std::string form;
  std::string pos;
  int head = 0;
  std::string relation;

  bool operator==(const Token&) const = default;
};

using Sentence = std::vector<Token>;

struct Document {
  std::string id;
  std::string native_language;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::vector<std::string> languages;  // sorted, unique
  std::vector<Document> documents;

  bool operator==(const Corpus&) const = default;
};

namespace detail {

inline void validate_sentence(const Sentence& sent, const std::string& doc_id,
                              size_t sentence_no) {
  auto fail = [&](const std::string& what) {
    throw DomainError("document '" + doc_id + "', sentence " +
                      std::to_string(sentence_no) + ": " + what);
  };
  int roots = 0;
  for (const Token& tok : sent) {
    if (tok.index < 1) fail("token index must be >= 1");
    if (tok.head < 0) fail("head index must be >= 0");
    if (tok.head == tok.index) fail("token " + std::to_string(tok.index) + " heads itself");
    if (tok.pos.empty()) fail("empty POS tag on token " + std::to_string(tok.index));
    if (tok.relation.empty()) fail("empty relation on token " + std::to_string(tok.index));
    if (tok.head > static_cast<int>(sent.size()))
      fail("head " + std::to_string(tok.head) + " out of range for a " +
           std::to_string(sent.size()) + "-token sentence");
    if (tok.head == 0) ++roots;
  }
  if (roots != 1) fail("expected exactly one root, found " + std::to_string(roots));
}

}  // namespace detail

inline void validate_document(const Document& doc) {
  if (doc.native_language.empty())
    throw DomainError("document '" + doc.id + "': empty native_language");
  for (size_t s = 0; s < doc.sentences.size(); ++s)
    detail::validate_sentence(doc.sentences[s], doc.id, s + 1);
}

// Recomputes the language set from the document labels.
inline Corpus make_corpus(std::vector<Document> documents) {
  Corpus corpus;
  std::set<std::string> ids;
  std::set<std::string> langs;
  for (const Document& doc : documents) {
    validate_document(doc);
    if (!ids.insert(doc.id).second)
      throw DomainError("duplicate document id '" + doc.id + "'");
    langs.insert(doc.native_language);
  }
  corpus.languages.assign(langs.begin(), langs.end());
  corpus.documents = std::move(documents);
  return corpus;
}

// Corpus text format:
//   # doc_id = <id>
//   # native_language = <label>
//   INDEX<TAB>FORM<TAB>POS<TAB>HEAD<TAB>RELATION    (one token per line)
//   <blank line>                                    (ends a sentence)
// A new `# doc_id` line (or end of stream) ends a document.
inline Corpus parse_corpus(std::istream& in) {
  std::vector<Document> documents;
  Document current;
  Sentence sentence;
  bool in_doc = false;
  int blank_run = 0;
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& what) {
    throw DomainError("corpus line " + std::to_string(lineno) + ": " + what);
  };
  auto end_sentence = [&]() {
    if (!sentence.empty()) {
      current.sentences.push_back(std::move(sentence));
      sentence.clear();
    }
  };
  auto end_document = [&]() {
    if (!in_doc) return;
    end_sentence();
    documents.push_back(std::move(current));
    current = Document{};
    in_doc = false;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (!t.empty()) blank_run = 0;
    if (t.rfind("# doc_id", 0) == 0) {
      end_document();
      size_t eq = t.find('=');
      if (eq == std::string::npos) fail("malformed '# doc_id' line");
      current.id = trim(t.substr(eq + 1));
      if (current.id.empty()) fail("empty doc_id");
      in_doc = true;
      continue;
    }
    if (t.rfind("# native_language", 0) == 0) {
      if (!in_doc) fail("'# native_language' before any '# doc_id'");
      size_t eq = t.find('=');
      if (eq == std::string::npos) fail("malformed '# native_language' line");
      current.native_language = trim(t.substr(eq + 1));
      if (current.native_language.empty()) fail("empty native_language");
      continue;
    }
    if (t.empty()) {
      end_sentence();
      if (++blank_run >= 2) end_document();  // double blank line closes the document
      continue;
    }
    if (t[0] == '#') continue;  // other comments are ignored
    if (!in_doc) fail("token line outside of a document");
    std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 5)
      fail("expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    Token tok;
    tok.index = static_cast<int>(parse_long(trim(fields[0]), "token index"));
    tok.form = fields[1];
    tok.pos = trim(fields[2]);
    tok.head = static_cast<int>(parse_long(trim(fields[3]), "head index"));
    tok.relation = trim(fields[4]);
    if (tok.form.empty()) fail("empty token form");
    if (tok.index != static_cast<int>(sentence.size()) + 1)
      fail("token index " + std::to_string(tok.index) + " out of sequence (expected " +
           std::to_string(sentence.size() + 1) + ")");
    sentence.push_back(std::move(tok));
  }
  end_document();
  return make_corpus(std::move(documents));
}

inline Corpus parse_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  return parse_corpus(in);
}

inline void serialize_corpus(const Corpus& corpus, std::ostream& out) {
  for (const Document& doc : corpus.documents) {
    out << "# doc_id = " << doc.id << "\n";
    out << "# native_language = " << doc.native_language << "\n";
    for (const Sentence& sent : doc.sentences) {
      for (const Token& tok : sent)
        out << tok.index << '\t' << tok.form << '\t' << tok.pos << '\t' << tok.head << '\t'
            << tok.relation << "\n";
      out << "\n";
    }
  }
}

// Stratified split: per language, round(fraction * n) documents go to train
// (ties round up), clamped so both sides keep at least one document.
// Documents are shuffled by a seeded generator after sorting by id, so the
// split depends only on the document set, the fraction, and the seed.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                              uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DomainError("train_fraction must be in (0,1)");
  std::map<std::string, std::vector<const Document*>> by_language;
  for (const Document& doc : corpus.documents) by_language[doc.native_language].push_back(&doc);

  std::set<std::string> train_ids;
  Rng rng(seed);
  for (auto& [lang, docs] : by_language) {
    if (docs.size() < 2)
      throw DomainError("cannot stratify: language '" + lang + "' has only " +
                        std::to_string(docs.size()) + " document(s)");
    std::sort(docs.begin(), docs.end(),
              [](const Document* a, const Document* b) { return a->id < b->id; });
    shuffle(docs, rng);
    long n = static_cast<long>(docs.size());
    long k = static_cast<long>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
    k = std::clamp(k, 1L, n - 1);
    for (long i = 0; i < k; ++i) train_ids.insert(docs[static_cast<size_t>(i)]->id);
  }

  std::vector<Document> train, heldout;
  for (const Document& doc : corpus.documents)
    (train_ids.count(doc.id) ? train : heldout).push_back(doc);
  return {make_corpus(std::move(train)), make_corpus(std::move(heldout))};
}

}  // namespace esltyp
