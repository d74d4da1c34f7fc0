#include "detoxr/baselines.hpp"

#include <sstream>

#include "detoxr/builtin_assets.hpp"
#include "detoxr/errors.hpp"
#include "detoxr/util.hpp"

namespace detoxr {

AliasLexicon::AliasLexicon() {
  for (std::size_t i = 0; i < kNumToxins; ++i) entries_.emplace(std::string(kToxinClasses[i].key), toxin_at(i));
}

AliasLexicon AliasLexicon::parse(std::string_view text) {
  AliasLexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("lexicon line " + std::to_string(line_no) + ": expected 'alias = class_key'");
    }
    auto alias = trim(body.substr(0, eq));
    auto key = trim(body.substr(eq + 1));
    auto toxin = toxin_from_key(key);
    if (alias.empty() || !toxin) {
      throw ConfigError("lexicon line " + std::to_string(line_no) + ": unknown class '" + std::string(key) + "'");
    }
    lex.add(alias, *toxin);
  }
  return lex;
}

AliasLexicon AliasLexicon::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

const AliasLexicon& AliasLexicon::builtin() {
  static const AliasLexicon lex = parse(assets::kAliasLexicon);
  return lex;
}

void AliasLexicon::add(std::string_view alias, Toxin toxin) {
  std::string key = to_lower(trim(alias));
  // Canonical keys are fixed points.
  if (auto canonical = toxin_from_key(key); canonical && *canonical != toxin) {
    throw ConfigError("alias '" + key + "' is a canonical key of another class");
  }
  entries_[key] = toxin;
}

std::optional<Toxin> AliasLexicon::resolve(std::string_view substance) const {
  auto it = entries_.find(to_lower(trim(substance)));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

HistoryPrediction resolve_history(const std::vector<std::string>& history, const AliasLexicon& lexicon) {
  HistoryPrediction out;
  for (const auto& entry : history) {
    if (auto t = lexicon.resolve(entry)) {
      out.labels.set(*t);
    } else {
      ++out.unresolved;
    }
  }
  return out;
}

HistoryPrediction history_baseline(const Case& c, const AliasLexicon& lexicon) {
  return resolve_history(c.substance_history, lexicon);
}

}  // namespace detoxr
