// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Offline stand-in for a chat model. It recognises the six prompt shapes by
// their section markers and answers each one deterministically from the
// request fingerprint, so desk runs and shipped cassettes need no network.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cpg/gateway.hpp"
#include "cpg/textmetrics.hpp"

namespace cpg {

namespace synth {

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "about", "after", "also", "among", "and", "another", "are", "because", "been", "before",
      "being", "between", "both", "can", "could", "different", "does", "each", "every", "from",
      "have", "help", "helps", "here", "into", "just", "like", "make", "makes", "many", "more",
      "most", "much", "need", "only", "other", "same", "some", "such", "than", "that", "their",
      "them", "then", "there", "these", "they", "thing", "things", "this", "those", "through",
      "under", "using", "very", "what", "when", "where", "which", "while", "who", "why", "will",
      "with", "within", "without", "would", "your", "students", "understanding", "demonstrate",
      "information", "evidence", "example", "examples", "ways", "provide", "support", "based",
      "across", "appear", "found", "happen", "happens", "important", "meet", "move", "moves",
      "predicted", "show", "shows", "toward", "well"};
  return words;
}

// Lowercased alphabetic tokens of four or more letters, minus stopwords.
inline std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 4 && !stopwords().count(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

inline std::set<std::string> content_set(std::string_view text) {
  auto v = content_words(text);
  return {v.begin(), v.end()};
}

// Fraction of `reference` content words that occur in `text`.
inline double coverage(std::string_view reference, std::string_view text) {
  const auto ref = content_set(reference);
  if (ref.empty()) return 0;
  const auto have = content_set(text);
  std::size_t hit = 0;
  for (const auto& w : ref) hit += have.count(w);
  return static_cast<double>(hit) / static_cast<double>(ref.size());
}

// Text between `open` and the next line starting with `stop`, trimmed.
inline std::string section(std::string_view text, std::string_view open, std::string_view stop) {
  const auto a = text.find(open);
  if (a == std::string_view::npos) return {};
  std::size_t b = a + open.size();
  std::size_t e = stop.empty() ? std::string_view::npos : text.find(stop, b);
  if (e == std::string_view::npos) e = text.size();
  std::string s(text.substr(b, e - b));
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::string line_after(std::string_view text, std::string_view label) {
  return section(text, label, "\n");
}

inline int first_int(const std::string& text, const std::regex& re, int fallback) {
  std::smatch m;
  if (std::regex_search(text, m, re)) return std::stoi(m[1].str());
  return fallback;
}

inline std::string lower_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

inline std::string upper_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace synth

class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(std::string backend_id) : backend_id_(std::move(backend_id)) {}

  Completion send(const ChatRequest& request) override {
    std::mt19937_64 rng(sha256_u64(backend_id_ + "|" + request.fingerprint));
    const std::string& p = request.user_text;
    std::string text;
    if (p.find("[Curriculum Item Categories]") != std::string::npos) {
      text = categorize(p);
    } else if (p.find("[Comprehensibility Aspects]") != std::string::npos) {
      text = comprehensibility(p);
    } else if (p.find("[Curriculum Information]") != std::string::npos) {
      text = alignment(p, rng);
    } else if (p.find("=== Wonder Topic ===") != std::string::npos) {
      text = passage(p, rng);
    } else if (p.find("=== Science Concept ===") != std::string::npos) {
      text = topics(p, rng);
    } else {
      text = "I am not sure how to help with that request.";
    }
    return {std::move(text), std::string(kEpochTimestamp)};
  }

 private:
  static std::string pick(std::mt19937_64& rng, const std::vector<std::string>& v) {
    return v[rng() % v.size()];
  }

  std::string topics(const std::string& p, std::mt19937_64& rng) const {
    static const std::regex kCount(R"(generate (\d+) different)");
    const int n = std::max(1, synth::first_int(p, kCount, 5));
    auto words = synth::content_words(synth::section(p, "=== Core Ideas ===", "==="));
    auto concept_words = synth::content_words(synth::section(p, "=== Science Concept ===", "==="));
    words.insert(words.end(), concept_words.begin(), concept_words.end());
    if (words.empty()) words = {"nature"};
    static const std::vector<std::string> frames = {
        "How do {a} and {b} work together?",   "What happens to {a} without {b}?",
        "Why is {a} important for {b}?",       "Where can we find {a} near our school?",
        "What can {a} teach us about {b}?",    "How would our world change without {a}?",
        "Why do we see {a} in some places but not others?", "How can we test ideas about {a}?"};
    std::vector<std::size_t> order(frames.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    std::string out = "Here are some wonder topics:\n";
    for (int i = 0; i < n; ++i) {
      std::string q = frames[order[static_cast<std::size_t>(i) % order.size()]];
      const std::size_t ia = rng() % words.size();
      const std::size_t ib = words.size() > 1 ? (ia + 1 + rng() % (words.size() - 1)) % words.size() : ia;
      const std::string& a = words[ia];
      const std::string& b = words[ib];
      q.replace(q.find("{a}"), 3, a);
      if (auto at = q.find("{b}"); at != std::string::npos) q.replace(at, 3, b);
      out += std::to_string(i + 1) + ". " + q + "\n";
    }
    return out;
  }

  std::string passage(const std::string& p, std::mt19937_64& rng) const {
    static const std::regex kTarget(R"((\d+)-word)");
    const int target = std::max(20, synth::first_int(p, kTarget, 100));
    const std::string topic = synth::section(p, "=== Wonder Topic ===", "===");
    const bool cogent = p.find("=== Science Concept ===") != std::string::npos;
    const std::string concept_name = synth::section(p, "=== Science Concept ===", "===");
    std::string ideas = synth::section(p, "What the student needs to learn:", "===");
    std::string outcome = synth::section(p, "can:", "===");

    auto keys = synth::content_words(topic);
    if (keys.empty()) keys = {"science"};
    static const std::vector<std::string> core = {
        "Let us think about {k}.", "You can see {k} when you look outside.",
        "Scientists study {k} to learn how the world works.", "Ask a friend what they know about {k}.",
        "We can test our ideas about {k} with a simple plan.", "Write down what you notice about {k}.",
        "Look for patterns in {k} each day.", "Draw a picture to show your idea about {k}.",
        "Talk with your class about {k}.", "Good questions about {k} help us learn more."};
    static const std::vector<std::string> everyday = {
        "Some days are sunny and some days are rainy.", "Many people enjoy a long walk in the park.",
        "It is fun to learn new things with friends.", "Grown-ups often have stories to share.",
        "Books and games can teach us a lot.", "Every answer can lead to a new question.",
        "Sometimes the world surprises us in wonderful and unexpected ways.",
        "Remember that curiosity is a wonderful everyday adventure."};

    std::vector<std::string> sentences;
    sentences.push_back(topic.empty() ? "Have you ever wondered about the world?" : topic);
    if (cogent) {
      if (!concept_name.empty()) sentences.push_back("Today we explore " + synth::lower_first(concept_name) + ".");
      if (!ideas.empty()) sentences.push_back("Here is a big idea: " + synth::lower_first(ideas) + ".");
    }
    const double lo = cogent ? 0.9 : 0.95, hi = cogent ? 1.08 : 1.2;
    const double factor = lo + (hi - lo) * static_cast<double>(rng() % 1000) / 1000.0;
    const std::size_t goal = static_cast<std::size_t>(target * factor);
    std::size_t words = tokenize(sentences.front()).word_count;
    for (std::size_t i = 1; i < sentences.size(); ++i) words += tokenize(sentences[i]).word_count;
    bool outcome_used = !cogent || outcome.empty();
    auto recent = [&](const std::string& s) {
      const std::size_t from = sentences.size() > 5 ? sentences.size() - 5 : 0;
      return std::find(sentences.begin() + static_cast<std::ptrdiff_t>(from), sentences.end(), s) !=
             sentences.end();
    };
    while (words < goal) {
      std::string s;
      if (!outcome_used && words > goal / 2) {
        s = "Now you can " + synth::lower_first(outcome) + ".";
        outcome_used = true;
      } else if (!cogent && rng() % 3 == 0) {
        s = pick(rng, everyday);
      } else {
        s = pick(rng, core);
        const auto at = s.find("{k}");
        const std::string k = keys[rng() % keys.size()];
        s.replace(at, 3, at == 0 ? synth::upper_first(k) : k);
      }
      if (recent(s) && rng() % 8 != 0) continue;
      words += tokenize(s).word_count;
      sentences.push_back(std::move(s));
    }
    if (!outcome_used) sentences.push_back("Now you can " + synth::lower_first(outcome) + ".");
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (i > 0) out += (i % 6 == 0) ? "\n\n" : " ";
      out += sentences[i];
    }
    return out;
  }

  std::string alignment(const std::string& p, std::mt19937_64& rng) const {
    const std::string curriculum = synth::line_after(p, "Science Concept:") + " " +
                                   synth::line_after(p, "Core Ideas:") + " " +
                                   synth::line_after(p, "Learning Outcomes:");
    const std::string body = synth::section(p, "[Input Passage Content]", "");
    const double cov = synth::coverage(curriculum, body);
    int score = 1 + static_cast<int>(std::sqrt(cov) * 4.0 + 0.5);
    if (score < 5 && rng() % 5 == 0) ++score;
    score = std::clamp(score, 1, 5);
    return "The passage covers about " + std::to_string(static_cast<int>(cov * 100)) +
           "% of the curriculum vocabulary.\nAlignment Score: " + std::to_string(score);
  }

  std::string categorize(const std::string& p) const {
    const std::string blocks = synth::section(p, "[Curriculum Item Categories]", "[Input Passage Content]");
    const std::string body = synth::section(p, "[Input Passage Content]", "");
    std::string best_label = "A";
    double best = -1;
    std::string label, descr;
    auto consider = [&] {
      if (label.empty()) return;
      const double c = synth::coverage(descr, body);
      if (c > best) {
        best = c;
        best_label = label;
      }
    };
    std::size_t pos = 0;
    while (pos < blocks.size()) {
      std::size_t end = blocks.find('\n', pos);
      if (end == std::string::npos) end = blocks.size();
      std::string line = blocks.substr(pos, end - pos);
      pos = end + 1;
      const auto colon = line.find("\": ");
      if (colon == std::string::npos) continue;
      const std::string key = line.substr(1, colon - 1);
      std::string raw = line.substr(colon + 3);
      if (!raw.empty() && raw.back() == ',') raw.pop_back();
      const json v = json::parse(raw, nullptr, false);
      const std::string value = v.is_string() ? v.get<std::string>() : raw;
      if (key == "Type") {
        consider();
        label = value;
        descr.clear();
      } else if (key == "Core Ideas" || key == "Learning Outcomes") {
        descr += " " + value;
      }
    }
    consider();
    return "Predicted Type: " + best_label;
  }

  std::string comprehensibility(const std::string& p) const {
    static const std::regex kGrade(R"(Grade (\d+))");
    const int grade = synth::first_int(synth::section(p, "[Target Grade Level]", "["), kGrade, 3);
    const std::string topic = synth::line_after(p, "Topic:");
    const std::string body = synth::section(p, "[Input Passage Content]", "");
    int readability = 4;
    try {
      const double fk = readability_report(body).flesch_kincaid_grade;
      readability = fk <= grade + 1.0 ? 5 : (fk <= grade + 2.5 ? 4 : 3);
    } catch (const Error&) {
      readability = 1;
    }
    const int coherence = synth::coverage(topic, body) >= 0.5 ? 5 : 4;
    const int engagement = body.find('?') != std::string::npos ? 5 : 4;
    return "Readability: " + std::to_string(readability) + ", Correctness: 5, Coherence: " +
           std::to_string(coherence) + ", Engagement: " + std::to_string(engagement);
  }

  std::string backend_id_;
};

}  // namespace cpg
