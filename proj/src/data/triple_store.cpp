#include "tsam/data/triple_store.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>

#include "tsam/error.hpp"

namespace tsam::data {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

TripleStore::TripleStore(std::vector<std::string> entity_names, std::vector<std::string> relation_names,
                         std::vector<Triple> train, std::vector<Triple> valid, std::vector<Triple> test)
    : entity_names_(std::move(entity_names)),
      relation_names_(std::move(relation_names)),
      train_(std::move(train)),
      valid_(std::move(valid)),
      test_(std::move(test)) {
  if (entity_names_.empty() || relation_names_.empty()) {
    throw ContractError("triple store needs at least one entity and one relation");
  }
  std::set<Triple> seen;
  for (const auto* split : {&train_, &valid_, &test_}) {
    for (const Triple& t : *split) {
      if (t.head >= entity_count() || t.tail >= entity_count() || t.relation >= relation_count()) {
        throw ContractError("triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " +
                            std::to_string(t.tail) + ") references an unknown id");
      }
      if (!seen.insert(t).second) {
        throw ContractError("triple (" + std::to_string(t.head) + ", " + std::to_string(t.relation) + ", " +
                            std::to_string(t.tail) + ") appears more than once across splits");
      }
      filter_[key(t.head, t.relation)].push_back(t.tail);
      filter_[key(t.tail, inverse(t.relation))].push_back(t.head);
    }
  }
  for (auto& [k, answers] : filter_) std::sort(answers.begin(), answers.end());
}

std::span<const Triple> TripleStore::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train_;
    case Split::kValid: return valid_;
    case Split::kTest: return test_;
  }
  return {};
}

std::span<const std::uint32_t> TripleStore::known_answers(std::uint32_t head, std::uint32_t relation) const {
  auto it = filter_.find(key(head, relation));
  if (it == filter_.end()) return {};
  return it->second;
}

bool TripleStore::is_known(const Triple& t) const {
  auto answers = known_answers(t.head, t.relation);
  return std::binary_search(answers.begin(), answers.end(), t.tail);
}

namespace {

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / (stem + ".txt"), dir / stem}) {
    if (std::filesystem::is_regular_file(candidate)) return candidate;
  }
  throw IoError("missing " + stem + " file in " + dir.string());
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(line, number);
  }
}

std::uint32_t parse_id(std::string_view field, const std::filesystem::path& file, std::size_t line) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(file.string(), line, "invalid id '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string> load_vocabulary(const std::filesystem::path& path) {
  std::map<std::uint32_t, std::string> by_id;
  std::set<std::string> names;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError(path.string(), number, "expected 'name<TAB>id'");
    }
    std::string name = line.substr(0, tab);
    const std::uint32_t id = parse_id(std::string_view(line).substr(tab + 1), path, number);
    if (!names.insert(name).second) throw ParseError(path.string(), number, "duplicate name '" + name + "'");
    if (!by_id.emplace(id, name).second) {
      throw ParseError(path.string(), number, "duplicate id " + std::to_string(id));
    }
  });
  std::vector<std::string> out;
  out.reserve(by_id.size());
  for (const auto& [id, name] : by_id) {
    if (id != out.size()) {
      throw ParseError(path.string(), 0, "ids are not dense: missing id " + std::to_string(out.size()));
    }
    out.push_back(name);
  }
  if (out.empty()) throw ParseError(path.string(), 0, "empty vocabulary");
  return out;
}

std::vector<Triple> load_split(const std::filesystem::path& path, std::size_t entities, std::size_t relations,
                               std::map<Triple, std::string>& seen) {
  std::vector<Triple> out;
  for_each_line(path, [&](const std::string& line, std::size_t number) {
    std::string_view rest(line);
    std::string_view fields[3];
    for (int i = 0; i < 3; ++i) {
      const auto tab = rest.find('\t');
      if ((i < 2) == (tab == std::string_view::npos)) {
        throw ParseError(path.string(), number, "expected 'head<TAB>relation<TAB>tail'");
      }
      fields[i] = rest.substr(0, tab);
      rest = i < 2 ? rest.substr(tab + 1) : std::string_view{};
    }
    Triple t{parse_id(fields[0], path, number), parse_id(fields[1], path, number),
             parse_id(fields[2], path, number)};
    if (t.head >= entities || t.tail >= entities) {
      throw ParseError(path.string(), number, "dangling entity id");
    }
    if (t.relation >= relations) throw ParseError(path.string(), number, "dangling relation id");
    const std::string where = path.filename().string() + ":" + std::to_string(number);
    auto [it, inserted] = seen.emplace(t, where);
    if (!inserted) throw ParseError(path.string(), number, "duplicate triple, first seen at " + it->second);
    out.push_back(t);
  });
  return out;
}

void write_lines(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

TripleStore load_triples(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  auto entities = load_vocabulary(find_file(dir, "entity2id"));
  auto relations = load_vocabulary(find_file(dir, "relation2id"));
  std::map<Triple, std::string> seen;
  const auto train_path = find_file(dir, "train");
  auto train = load_split(train_path, entities.size(), relations.size(), seen);
  if (train.empty()) throw ParseError(train_path.string(), 0, "empty split");
  auto valid = load_split(find_file(dir, "valid"), entities.size(), relations.size(), seen);
  auto test = load_split(find_file(dir, "test"), entities.size(), relations.size(), seen);
  return TripleStore(std::move(entities), std::move(relations), std::move(train), std::move(valid),
                     std::move(test));
}

void write_triples(const TripleStore& store, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto vocab = [](const std::vector<std::string>& names) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) s += names[i] + "\t" + std::to_string(i) + "\n";
    return s;
  };
  write_lines(dir / "entity2id.txt", vocab(store.entity_names()));
  write_lines(dir / "relation2id.txt", vocab(store.relation_names()));
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    std::string text;
    for (const Triple& t : store.split(s)) {
      text += std::to_string(t.head) + "\t" + std::to_string(t.relation) + "\t" + std::to_string(t.tail) + "\n";
    }
    write_lines(dir / (std::string(split_name(s)) + ".txt"), text);
  }
}

}  // namespace tsam::data
