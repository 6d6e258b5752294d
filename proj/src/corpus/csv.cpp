#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "cicle/corpus.hpp"
#include "cicle/error.hpp"

namespace cicle {
namespace {

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the row starts
};

// RFC 4180: quoted fields may hold commas, doubled quotes and line breaks.
std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t pos = 0;
  std::size_t line = 1;
  if (text.starts_with("\xEF\xBB\xBF")) pos = 3;

  while (pos < text.size()) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool row_done = false;
    while (!row_done) {
      field.clear();
      if (pos < text.size() && text[pos] == '"') {
        ++pos;
        for (;;) {
          if (pos >= text.size()) {
            throw SchemaError("row starting at line " + std::to_string(row.line) + ": unterminated quoted field");
          }
          char ch = text[pos++];
          if (ch == '"') {
            if (pos < text.size() && text[pos] == '"') {
              field.push_back('"');
              ++pos;
            } else {
              break;
            }
          } else {
            if (ch == '\n') ++line;
            field.push_back(ch);
          }
        }
        if (pos < text.size() && text[pos] != ',' && text[pos] != '\n' && text[pos] != '\r') {
          throw SchemaError("row starting at line " + std::to_string(row.line) +
                            ": unexpected character after closing quote");
        }
      } else {
        while (pos < text.size() && text[pos] != ',' && text[pos] != '\n' && text[pos] != '\r') {
          field.push_back(text[pos++]);
        }
      }
      row.fields.push_back(field);
      if (pos >= text.size()) {
        row_done = true;
      } else if (text[pos] == ',') {
        ++pos;
      } else {
        if (text[pos] == '\r') ++pos;
        if (pos < text.size() && text[pos] == '\n') ++pos;
        ++line;
        row_done = true;
      }
    }
    // Blank lines carry no record.
    if (!(row.fields.size() == 1 && row.fields[0].empty())) rows.push_back(std::move(row));
  }
  return rows;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_column(std::string_view name) {
  std::string n = trim(name);
  for (auto& ch : n) {
    if (ch == '_') ch = '-';
    ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return n;
}

std::optional<int> parse_int(std::string_view s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec == std::errc() && ptr == t.data() + t.size()) return value;
  // Exports from dataframes sometimes write "2015.0".
  double d = 0;
  auto [dptr, dec] = std::from_chars(t.data(), t.data() + t.size(), d);
  if (dec == std::errc() && dptr == t.data() + t.size() && d == static_cast<int>(d)) return static_cast<int>(d);
  return std::nullopt;
}

std::optional<std::string> optional_text(std::string_view s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  return t;
}

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

void write_field(std::ostream& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char ch : s) {
    if (ch == '"') out << '"';
    out << ch;
  }
  out << '"';
}

const std::vector<std::string> kRequired = {"title", "hazard", "hazard-category", "product", "product-category"};

}  // namespace

std::string format_spans(const std::vector<CharSpan>& spans) {
  std::string out = "[";
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (i) out += ", ";
    out += "(" + std::to_string(spans[i].start) + ", " + std::to_string(spans[i].end) + ")";
  }
  out += "]";
  return out;
}

std::optional<std::vector<CharSpan>> parse_spans(std::string_view text) {
  // Accepts any bracket/paren/separator layout around an even count of integers.
  std::vector<std::size_t> numbers;
  std::size_t i = 0;
  while (i < text.size()) {
    char ch = text[i];
    if (ch >= '0' && ch <= '9') {
      std::size_t value = 0;
      auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), value);
      if (ec != std::errc()) return std::nullopt;
      numbers.push_back(value);
      i = static_cast<std::size_t>(ptr - text.data());
    } else if (ch == '[' || ch == ']' || ch == '(' || ch == ')' || ch == ',' || ch == ' ' || ch == ';' ||
               ch == ':' || ch == '-' || ch == '\t') {
      ++i;
    } else {
      return std::nullopt;
    }
  }
  if (numbers.size() % 2 != 0) return std::nullopt;
  std::vector<CharSpan> spans;
  for (std::size_t k = 0; k < numbers.size(); k += 2) spans.push_back({numbers[k], numbers[k + 1]});
  return spans;
}

LabeledDataset read_csv(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto rows = parse_csv(text);
  if (rows.empty()) throw SchemaError("CSV has no header row");

  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < rows[0].fields.size(); ++c) {
    column.emplace(normalize_column(rows[0].fields[c]), c);
  }
  for (const auto& name : kRequired) {
    if (!column.contains(name)) throw SchemaError("missing required column '" + name + "'");
  }
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = column.find(name);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };

  std::vector<IncidentRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto where = [&] { return "row " + std::to_string(r) + " (line " + std::to_string(row.line) + ")"; };
    auto get = [&](std::optional<std::size_t> c) -> std::string_view {
      if (!c || *c >= row.fields.size()) return {};
      return row.fields[*c];
    };
    if (row.fields.size() < rows[0].fields.size()) {
      throw SchemaError(where() + ": expected " + std::to_string(rows[0].fields.size()) + " fields, found " +
                        std::to_string(row.fields.size()));
    }
    IncidentRecord rec;
    rec.title = std::string(get(col("title")));
    if (trim(rec.title).empty()) throw SchemaError(where() + ": empty title");
    rec.hazard = trim(get(col("hazard")));
    rec.hazard_category = trim(get(col("hazard-category")));
    rec.product = trim(get(col("product")));
    rec.product_category = trim(get(col("product-category")));
    for (Task t : kAllTasks) {
      if (rec.label(t).empty()) throw SchemaError(where() + ": empty label in column '" + std::string(task_name(t)) + "'");
    }
    rec.year = parse_int(get(col("year")));
    rec.month = parse_int(get(col("month")));
    rec.day = parse_int(get(col("day")));
    rec.language = optional_text(get(col("language")));
    rec.country = optional_text(get(col("country")));
    if (auto s = optional_text(get(col("hazard-title")))) rec.hazard_title_spans = parse_spans(*s);
    if (auto s = optional_text(get(col("product-title")))) rec.product_title_spans = parse_spans(*s);
    for (auto* spans : {&rec.hazard_title_spans, &rec.product_title_spans}) {
      if (!*spans) continue;
      for (const auto& sp : **spans) {
        if (!(sp.start < sp.end && sp.end <= rec.title.size())) {
          throw SchemaError(where() + ": span " + format_spans({sp}) + " outside the title");
        }
      }
    }
    records.push_back(std::move(rec));
  }
  return LabeledDataset(std::move(records));
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return read_csv(in);
}

void write_csv(std::ostream& out, const LabeledDataset& ds) {
  out << "title,hazard,hazard-category,product,product-category,year,month,day,language,country,"
         "hazard-title,product-title\n";
  auto opt_int = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : ds.records()) {
    write_field(out, r.title);
    for (const std::string* s : {&r.hazard, &r.hazard_category, &r.product, &r.product_category}) {
      out << ',';
      write_field(out, *s);
    }
    out << ',' << opt_int(r.year) << ',' << opt_int(r.month) << ',' << opt_int(r.day) << ',';
    write_field(out, r.language.value_or(""));
    out << ',';
    write_field(out, r.country.value_or(""));
    out << ',';
    write_field(out, r.hazard_title_spans ? format_spans(*r.hazard_title_spans) : "");
    out << ',';
    write_field(out, r.product_title_spans ? format_spans(*r.product_title_spans) : "");
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_csv(out, ds);
}

}  // namespace cicle
