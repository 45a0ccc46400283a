#include "pipevo/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "pipevo/errors.hpp"
#include "pipevo/random.hpp"

#ifndef PIPEVO_PROMPT_DIR
#define PIPEVO_PROMPT_DIR "assets/prompts"
#endif

namespace pipevo {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, 4> kSlotNames = {"problem", "code", "traceback", "analysis"};

struct SlotRules {
    std::vector<std::string_view> required;
    std::vector<std::string_view> optional;
};

SlotRules rules_for(Role role) {
    switch (role) {
        case Role::Generator: return {{"problem"}, {}};
        case Role::Analyzer: return {{"code", "traceback"}, {}};
        case Role::Refiner: return {{"problem", "code", "traceback"}, {"analysis"}};
    }
    return {};
}

bool contains(const std::vector<std::string_view>& v, std::string_view s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

const std::optional<std::string>& slot_value(const PromptSlots& slots, std::string_view name) {
    if (name == "problem") return slots.problem;
    if (name == "code") return slots.code;
    if (name == "traceback") return slots.traceback;
    return slots.analysis;
}

struct Token {
    std::size_t begin;
    std::size_t end;
    char kind;  // ' ' plain, '#' open section, '/' close section
    std::string name;
};

/// Every `{{...}}` in `text`. Throws on anything that is not a well-formed known placeholder.
std::vector<Token> scan(std::string_view text, const std::string& where) {
    std::vector<Token> tokens;
    for (std::size_t pos = text.find("{{"); pos != std::string_view::npos; pos = text.find("{{", pos)) {
        auto close = text.find("}}", pos);
        if (close == std::string_view::npos) throw TemplateError(where + ": unterminated placeholder");
        std::string_view inner = text.substr(pos + 2, close - pos - 2);
        char kind = ' ';
        if (!inner.empty() && (inner.front() == '#' || inner.front() == '/')) {
            kind = inner.front();
            inner.remove_prefix(1);
        }
        if (std::find(kSlotNames.begin(), kSlotNames.end(), inner) == kSlotNames.end()) {
            throw TemplateError(fmt::format("{}: unknown placeholder '{{{{{}}}}}'", where,
                                            text.substr(pos + 2, close - pos - 2)));
        }
        tokens.push_back({pos, close + 2, kind, std::string(inner)});
        pos = close + 2;
    }
    return tokens;
}

void validate_template(const PromptTemplate& t) {
    const std::string where = fmt::format("{}-{}", to_string(t.role), t.index);
    const auto rules = rules_for(t.role);
    if (!scan(t.system, where + " [system]").empty()) {
        throw TemplateError(where + ": placeholders are only allowed in the [user] part");
    }
    auto tokens = scan(t.user, where);
    std::vector<std::string_view> seen;
    std::string open_section;
    for (const auto& tok : tokens) {
        const bool known_for_role = contains(rules.required, tok.name) || contains(rules.optional, tok.name);
        if (!known_for_role) {
            throw TemplateError(fmt::format("{}: placeholder '{}' is not used by the {} role", where,
                                            tok.name, to_string(t.role)));
        }
        if (tok.kind == '#') {
            if (!open_section.empty() || !contains(rules.optional, tok.name)) {
                throw TemplateError(fmt::format("{}: bad section '{}'", where, tok.name));
            }
            open_section = tok.name;
        } else if (tok.kind == '/') {
            if (open_section != tok.name) throw TemplateError(fmt::format("{}: unbalanced section '{}'", where, tok.name));
            open_section.clear();
        } else {
            if (contains(rules.optional, tok.name) && open_section != tok.name) {
                throw TemplateError(fmt::format("{}: optional slot '{}' must sit inside its section", where, tok.name));
            }
            seen.push_back(tok.name);
        }
    }
    if (!open_section.empty()) throw TemplateError(fmt::format("{}: unclosed section '{}'", where, open_section));
    for (auto r : rules.required) {
        if (!contains(seen, r)) throw TemplateError(fmt::format("{}: required placeholder '{}' missing", where, r));
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw TemplateError("cannot read prompt asset " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim_copy(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

PromptTemplate PromptTemplate::parse(Role role, int index, std::string_view text) {
    const std::string where = fmt::format("{}-{}", to_string(role), index);
    auto sys = text.find("[system]");
    auto usr = text.find("[user]");
    if (sys == std::string_view::npos || usr == std::string_view::npos || usr < sys) {
        throw TemplateError(where + ": expected [system] then [user] sections");
    }
    PromptTemplate t;
    t.role = role;
    t.index = index;
    t.system = trim_copy(text.substr(sys + 8, usr - sys - 8));
    t.user = trim_copy(text.substr(usr + 6));
    t.version = fmt::format("{:016x}", fnv1a(text));
    if (t.system.empty() || t.user.empty()) throw TemplateError(where + ": empty section");
    validate_template(t);
    return t;
}

PromptPool PromptPool::from_templates(std::vector<PromptTemplate> templates) {
    PromptPool pool;
    for (Role role : {Role::Generator, Role::Analyzer, Role::Refiner}) {
        auto& slot = pool.by_role_[static_cast<int>(role)];
        slot.resize(prompt_pool_size(role));
        std::vector<bool> filled(slot.size(), false);
        for (auto& t : templates) {
            if (t.role != role) continue;
            if (t.index < 0 || t.index >= prompt_pool_size(role) || filled[t.index]) {
                throw TemplateError(fmt::format("{}-{}: index out of range or duplicated", to_string(role), t.index));
            }
            validate_template(t);
            slot[t.index] = t;
            filled[t.index] = true;
        }
        for (std::size_t i = 0; i < filled.size(); ++i) {
            if (!filled[i]) throw TemplateError(fmt::format("{}-{}: template missing", to_string(role), i));
        }
    }
    return pool;
}

PromptPool PromptPool::load(const fs::path& dir) {
    std::vector<PromptTemplate> templates;
    for (Role role : {Role::Generator, Role::Analyzer, Role::Refiner}) {
        for (int i = 0; i < prompt_pool_size(role); ++i) {
            auto path = dir / fmt::format("{}-{}.txt", to_string(role), i);
            if (!fs::exists(path)) throw TemplateError("missing prompt asset " + path.string());
            templates.push_back(PromptTemplate::parse(role, i, read_file(path)));
        }
    }
    return from_templates(std::move(templates));
}

const PromptTemplate& PromptPool::get(Role role, int index) const {
    const auto& v = by_role_[static_cast<int>(role)];
    if (index < 0 || static_cast<std::size_t>(index) >= v.size()) {
        throw TemplateError(fmt::format("no {} prompt with index {}", to_string(role), index));
    }
    return v[index];
}

RenderedPrompt PromptPool::render(Role role, int index, const PromptSlots& slots) const {
    const auto& t = get(role, index);
    const auto rules = rules_for(role);
    for (auto r : rules.required) {
        if (!slot_value(slots, r)) {
            throw TemplateError(fmt::format("{}-{}: required slot '{}' not provided", to_string(role), index, r));
        }
    }

    // Single pass so that substituted text is never re-scanned for placeholders.
    const std::string_view src = t.user;
    auto tokens = scan(src, "render");
    std::string out;
    std::size_t cursor = 0;
    bool skipping = false;
    for (auto tok : tokens) {
        // A section marker alone on its line takes the line break with it.
        if (tok.kind != ' ' && (tok.begin == 0 || src[tok.begin - 1] == '\n') && tok.end < src.size() &&
            src[tok.end] == '\n') {
            ++tok.end;
        }
        if (!skipping) out.append(src.substr(cursor, tok.begin - cursor));
        cursor = tok.end;
        if (tok.kind == '#') {
            skipping = !slot_value(slots, tok.name).has_value();
        } else if (tok.kind == '/') {
            skipping = false;
        } else if (!skipping) {
            out += *slot_value(slots, tok.name);
        }
    }
    out.append(src.substr(cursor));
    return {t.system, out};
}

std::vector<std::string> PromptPool::versions() const {
    std::vector<std::string> out;
    for (const auto& role : by_role_) {
        for (const auto& t : role) out.push_back(fmt::format("{}-{}={}", to_string(t.role), t.index, t.version));
    }
    return out;
}

fs::path default_prompt_dir() {
    if (const char* env = std::getenv("PIPEVO_PROMPT_DIR"); env && *env) return env;
    return PIPEVO_PROMPT_DIR;
}

RenderedPrompt render_prompt(const PromptPool& pool, Role role, int prompt_index, const PromptSlots& slots) {
    return pool.render(role, prompt_index, slots);
}

// ---------------------------------------------------------------------------

namespace {

std::string tidy_code(std::string_view s) {
    // Drop leading blank lines but keep indentation of the first code line.
    std::size_t start = 0;
    for (;;) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) break;
        auto line = s.substr(start, nl - start);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) break;
        start = nl + 1;
    }
    s.remove_prefix(start);
    auto e = s.find_last_not_of(" \t\r\n");
    if (e == std::string_view::npos) return {};
    return std::string(s.substr(0, e + 1));
}

bool defines_function(const std::string& code) {
    static const std::regex def_re(R"((^|\n)[ \t]*(async[ \t]+)?def[ \t]+\w+[ \t]*\()");
    return std::regex_search(code, def_re);
}

}  // namespace

std::string extract_code(std::string_view raw) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    while (true) {
        auto open = raw.find("```", pos);
        if (open == std::string_view::npos) break;
        auto line_end = raw.find('\n', open + 3);
        if (line_end == std::string_view::npos) {
            break;  // fence with nothing after it
        }
        auto body_start = line_end + 1;
        auto close = raw.find("```", body_start);
        std::string_view body = raw.substr(body_start, close == std::string_view::npos ? raw.npos : close - body_start);
        blocks.push_back(tidy_code(body));
        if (close == std::string_view::npos) break;
        pos = close + 3;
    }
    if (blocks.empty()) {
        // Single-line "```code```" or no fences at all.
        std::string text = trim_copy(raw);
        if (text.starts_with("```") && text.ends_with("```") && text.size() >= 6) {
            return trim_copy(std::string_view(text).substr(3, text.size() - 6));
        }
        return text;
    }
    for (const auto& b : blocks) {
        if (defines_function(b)) return b;
    }
    return blocks.front();
}

}  // namespace pipevo
