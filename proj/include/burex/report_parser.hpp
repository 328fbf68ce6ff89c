#pragma once

// Isolates the observation (findings) and impression sections of a report.

#include "burex/schema.hpp"
#include "burex/text.hpp"

#include <algorithm>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace burex {

/// Header patterns are ECMAScript regex fragments matched case-insensitively at the start
/// of a line (after optional indentation or markdown '#'), followed by ':' or end of line.
struct SectionRules
{
  std::vector<std::string> observation_headers{"Observation", "Observations", "Findings"};
  std::vector<std::string> impression_headers{"Impression"};
  std::vector<std::string> terminator_headers{"Disclosure"};
};

class NoObservationError : public std::runtime_error
{
public:
  explicit NoObservationError(std::string report_id)
  : std::runtime_error("report '" + report_id + "': no observation/findings section found")
  , report_id_(std::move(report_id))
  {}

  [[nodiscard]] const std::string& report_id() const noexcept { return report_id_; }

private:
  std::string report_id_;
};

namespace detail {

inline std::regex header_regex(const std::vector<std::string>& headers)
{
  if (headers.empty()) throw std::invalid_argument("section header list must not be empty");
  std::string alternation;
  for (const auto& h : headers) {
    if (!alternation.empty()) alternation += '|';
    alternation += "(?:" + h + ")";
  }
  return std::regex("^[ \\t#*]*(?:" + alternation + ")[ \\t*]*(?::|$)",
                    std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
}

}  // namespace detail

/// Compiled form of SectionRules; build once and reuse across reports.
class SectionParser
{
public:
  explicit SectionParser(SectionRules rules = {})
  : observation_(detail::header_regex(rules.observation_headers))
  , impression_(detail::header_regex(rules.impression_headers))
  , terminator_(detail::header_regex(rules.terminator_headers))
  {}

  /// Splits `raw_text` into sections. Throws NoObservationError when there is no
  /// observation header or its body is empty. Content after the first terminator
  /// header (e.g. "Disclosure") is never inspected.
  [[nodiscard]] ReportDocument parse(std::string id, std::string raw_text) const
  {
    enum class Kind { observation, impression, none };
    struct Line
    {
      std::size_t begin;
      Kind kind;
      std::size_t body_begin;
    };

    std::vector<Line> lines;
    std::size_t limit = raw_text.size();
    std::size_t offset = 0;
    for (std::string_view line : text::split_lines(raw_text)) {
      const std::string l(line);
      std::smatch m;
      Kind kind = Kind::none;
      if (std::regex_search(l, m, terminator_)) {
        limit = offset;
        break;
      }
      if (std::regex_search(l, m, observation_)) {
        kind = Kind::observation;
      }
      else if (std::regex_search(l, m, impression_)) {
        kind = Kind::impression;
      }
      if (kind != Kind::none) {
        lines.push_back({offset, kind, offset + static_cast<std::size_t>(m.length(0))});
      }
      offset += line.size() + 1;
    }

    auto section = [&](Kind kind) -> std::optional<std::string> {
      for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].kind != kind) continue;
        std::size_t end = limit;
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
          if (lines[j].kind != kind) {
            end = lines[j].begin;
            break;
          }
        }
        end = std::min(end, limit);
        const std::size_t begin = std::min(lines[i].body_begin, end);
        return std::string(text::trim(std::string_view(raw_text).substr(begin, end - begin)));
      }
      return std::nullopt;
    };

    ReportDocument doc;
    auto observation = section(Kind::observation);
    if (!observation || observation->empty()) throw NoObservationError(std::move(id));
    doc.observation = std::move(*observation);

    auto impression = section(Kind::impression);
    if (impression && !is_empty_impression(*impression)) doc.impression = std::move(impression);

    doc.id = std::move(id);
    doc.raw_text = std::move(raw_text);
    return doc;
  }

  /// Empty bodies and the "No Impression" sentinel both mean there is no impression.
  static bool is_empty_impression(std::string_view body)
  {
    std::string norm = text::normalize(body);
    while (!norm.empty() && norm.back() == '.') norm.pop_back();
    return norm.empty() || norm == "no impression";
  }

private:
  std::regex observation_;
  std::regex impression_;
  std::regex terminator_;
};

inline ReportDocument extract_sections(std::string raw_text, const SectionRules& rules = {},
                                       std::string id = {})
{
  return SectionParser(rules).parse(std::move(id), std::move(raw_text));
}

}  // namespace burex
