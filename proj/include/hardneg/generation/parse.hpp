#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardneg/text.hpp"

namespace hardneg::generation {

namespace detail {

inline std::string strip_quotes(std::string_view s) {
    s = text::trim(s);
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        s = text::trim(s.substr(1, s.size() - 2));
    return std::string(s);
}

inline std::optional<std::vector<std::string>> try_json_array(std::string_view candidate) {
    auto j = nlohmann::json::parse(candidate, nullptr, /*allow_exceptions=*/false);
    if (!j.is_array()) return std::nullopt;
    std::vector<std::string> out;
    for (const auto& e : j) {
        if (e.is_string()) {
            out.push_back(e.get<std::string>());
        } else if (e.is_object()) {
            for (const char* key : {"query", "question", "text"}) {
                if (auto it = e.find(key); it != e.end() && it->is_string()) {
                    out.push_back(it->get<std::string>());
                    break;
                }
            }
        }
    }
    return out;
}

// "1. foo", "2) foo", "- foo", "* foo", "• foo" -> "foo"
inline std::optional<std::string_view> list_item(std::string_view line) {
    line = text::trim(line);
    if (line.empty()) return std::nullopt;
    std::size_t i = 0;
    if (std::isdigit(static_cast<unsigned char>(line[0]))) {
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size() || (line[i] != '.' && line[i] != ')' && line[i] != ':')) return std::nullopt;
        ++i;
    } else if (line[0] == '-' || line[0] == '*') {
        i = 1;
    } else if (line.substr(0, 3) == "\xE2\x80\xA2") {
        i = 3;
    } else {
        return std::nullopt;
    }
    if (i < line.size() && !text::is_space(line[i])) return std::nullopt;
    return text::trim(line.substr(i));
}

}  // namespace detail

// JSON array of strings first (possibly embedded in prose or a code fence),
// then numbered or bulleted lines. Never throws; unparseable -> empty.
inline std::vector<std::string> parse_query_list(std::string_view completion) {
    std::vector<std::string> raw;
    const auto trimmed = text::trim(completion);
    if (auto arr = detail::try_json_array(trimmed)) {
        raw = std::move(*arr);
    } else if (auto open = trimmed.find('['), close = trimmed.rfind(']');
               open != std::string_view::npos && close != std::string_view::npos && close > open) {
        if (auto inner = detail::try_json_array(trimmed.substr(open, close - open + 1))) raw = std::move(*inner);
    }
    if (raw.empty()) {
        for (auto line : text::split_lines(trimmed)) {
            if (auto item = detail::list_item(line)) raw.emplace_back(*item);
        }
    }
    std::vector<std::string> out;
    for (auto& r : raw) {
        auto s = detail::strip_quotes(r);
        if (!s.empty()) out.push_back(std::move(s));
    }
    return out;
}

// Single-query replies (finance mutation, rephrasing): the list parser when
// it finds anything, otherwise the first non-empty line.
inline std::string parse_single_query(std::string_view completion) {
    auto list = parse_query_list(completion);
    if (!list.empty()) return list.front();
    for (auto line : text::split_lines(completion)) {
        auto s = detail::strip_quotes(line);
        if (!s.empty()) return s;
    }
    return {};
}

}  // namespace hardneg::generation
