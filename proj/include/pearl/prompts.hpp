#pragma once

// Prompt templates and few-shot exemplars. The defaults are compiled in from
// assets/prompts; a pipeline config may override any of them.

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pearl/backend.hpp"

namespace pearl::prompts {

/// Raw text of a bundled asset by file name. Throws InvalidConfig.
std::string_view asset(std::string_view name);

/// Substitutes {name} placeholders. Throws TemplateMissingPlaceholder when a
/// `required` placeholder does not occur in the template or a placeholder in
/// the template has no value.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values,
                   std::span<const std::string> required = {});

struct FewShotExemplar {
    std::string object;
    std::vector<std::string> tags;
    std::string answer;
};

struct FewShotSet {
    int version = 0;
    std::vector<FewShotExemplar> exemplars;

    static FewShotSet parse_json(std::string_view text);
    nlohmann::json to_json() const;
};

struct PromptTemplates {
    std::string selector_system;
    std::string selector_user;        // {object}, {tags}
    std::string selector_correction;  // {answer}, {tags}
    std::string mllm_tag_user;
    std::string mllm_select_system;
    std::string mllm_select_user;  // {object}
    std::string direct_system;     // {width}, {height}
    std::string direct_user;       // {object}
    std::string vqa_question;      // {tag}
    std::string edit_instruction;  // {object}
    FewShotSet fewshot;

    static PromptTemplates defaults();

    /// Overrides by field name, e.g. {"selector_user": "..."}; unknown names
    /// raise InvalidConfig.
    void apply_overrides(const nlohmann::json& overrides);
    nlohmann::json overrides_from(const PromptTemplates& base) const;

    /// Throws TemplateMissingPlaceholder.
    void validate() const;
};

/// System message (instructions plus the few-shot exemplars) and the user
/// question listing the candidate tags. `tags` must be non-empty.
std::vector<backend::ChatMessage> build_selector_prompt(std::span<const std::string> tags, const std::string& object,
                                                        const PromptTemplates& templates);

}  // namespace pearl::prompts
