#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pipevo/genome.hpp"

namespace pipevo {

/// Values substituted into a template. Which ones are required depends on the role:
/// generator needs `problem`; analyzer needs `code` and `traceback`; refiner needs `problem`,
/// `code` and `traceback`, and takes `analysis` optionally.
struct PromptSlots {
    std::optional<std::string> problem;
    std::optional<std::string> code;
    std::optional<std::string> traceback;
    std::optional<std::string> analysis;
};

struct RenderedPrompt {
    std::string system;
    std::string user;
};

/// One template asset. Text format:
///
///     [system]
///     ...system prompt...
///     [user]
///     ...user template with {{slot}} placeholders...
///
/// An optional slot may be wrapped in `{{#slot}} ... {{/slot}}`; the whole section disappears
/// when the slot is absent.
struct PromptTemplate {
    Role role = Role::Generator;
    int index = 0;
    std::string system;
    std::string user;
    std::string version;  ///< FNV-1a of the source text, hex

    static PromptTemplate parse(Role role, int index, std::string_view text);
};

class PromptPool {
public:
    /// Reads `<role>-<index>.txt` for every role and index. Throws TemplateError on a missing
    /// file, a missing required placeholder, or an unknown one.
    static PromptPool load(const std::filesystem::path& dir);

    /// Built from in-memory templates; used by tests. Same validation as load().
    static PromptPool from_templates(std::vector<PromptTemplate> templates);

    const PromptTemplate& get(Role role, int index) const;

    RenderedPrompt render(Role role, int index, const PromptSlots& slots) const;

    /// role:index=version lines, for run metadata.
    std::vector<std::string> versions() const;

private:
    std::array<std::vector<PromptTemplate>, 3> by_role_;
};

/// Directory holding the prompt assets shipped with the source tree.
std::filesystem::path default_prompt_dir();

RenderedPrompt render_prompt(const PromptPool& pool, Role role, int prompt_index,
                             const PromptSlots& slots);

/// Pulls code out of a model reply. With fenced blocks: the first block that defines a
/// function, else the first block; a language tag on the opening fence is dropped.
/// Without fences: the trimmed reply. Empty result signals degenerate output.
std::string extract_code(std::string_view raw);

}  // namespace pipevo
