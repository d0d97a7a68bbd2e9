#include "pearl/prompts.hpp"

#include <algorithm>
#include <set>

#include "pearl/error.hpp"
#include "pearl/text.hpp"

namespace pearl::prompts {

namespace detail {
const std::map<std::string, std::string_view, std::less<>>& embedded_assets();
}

namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Placeholder names in order of appearance.
std::vector<std::string> placeholders(std::string_view tmpl) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] != '{') continue;
        std::size_t j = i + 1;
        while (j < tmpl.size() && is_name_char(tmpl[j])) ++j;
        if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
            out.emplace_back(tmpl.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return out;
}

struct Field {
    const char* name;
    std::string PromptTemplates::*member;
    std::vector<std::string> required;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"selector_system", &PromptTemplates::selector_system, {}},
        {"selector_user", &PromptTemplates::selector_user, {"object", "tags"}},
        {"selector_correction", &PromptTemplates::selector_correction, {"answer", "tags"}},
        {"mllm_tag_user", &PromptTemplates::mllm_tag_user, {}},
        {"mllm_select_system", &PromptTemplates::mllm_select_system, {}},
        {"mllm_select_user", &PromptTemplates::mllm_select_user, {"object"}},
        {"direct_system", &PromptTemplates::direct_system, {"width", "height"}},
        {"direct_user", &PromptTemplates::direct_user, {"object"}},
        {"vqa_question", &PromptTemplates::vqa_question, {"tag"}},
        {"edit_instruction", &PromptTemplates::edit_instruction, {"object"}},
    };
    return f;
}

}  // namespace

std::string_view asset(std::string_view name) {
    const auto& assets = detail::embedded_assets();
    const auto it = assets.find(name);
    if (it == assets.end()) throw Error(ErrorKind::InvalidConfig, "no bundled prompt asset '" + std::string(name) + "'");
    return it->second;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values,
                   std::span<const std::string> required) {
    const auto present = placeholders(tmpl);
    for (const auto& r : required) {
        if (std::find(present.begin(), present.end(), r) == present.end()) {
            throw Error(ErrorKind::TemplateMissingPlaceholder, "template lacks {" + r + "}");
        }
    }
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_name_char(tmpl[j])) ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
                const std::string name(tmpl.substr(i + 1, j - i - 1));
                const auto it = values.find(name);
                if (it == values.end()) {
                    throw Error(ErrorKind::TemplateMissingPlaceholder, "no value for {" + name + "}");
                }
                out += it->second;
                i = j;
                continue;
            }
        }
        out += tmpl[i];
    }
    return out;
}

FewShotSet FewShotSet::parse_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("few-shot exemplars: ") + e.what());
    }
    FewShotSet set;
    try {
        set.version = j.at("version").get<int>();
        for (const auto& e : j.at("exemplars")) {
            FewShotExemplar ex;
            ex.object = e.at("object").get<std::string>();
            ex.tags = e.at("tags").get<std::vector<std::string>>();
            ex.answer = e.at("answer").get<std::string>();
            if (ex.tags.empty() || std::find(ex.tags.begin(), ex.tags.end(), ex.answer) == ex.tags.end()) {
                throw Error(ErrorKind::InvalidConfig, "few-shot answer '" + ex.answer + "' is not among its tags");
            }
            set.exemplars.push_back(std::move(ex));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("few-shot exemplars: ") + e.what());
    }
    return set;
}

nlohmann::json FewShotSet::to_json() const {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : exemplars) ex.push_back({{"object", e.object}, {"tags", e.tags}, {"answer", e.answer}});
    return {{"version", version}, {"exemplars", ex}};
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    for (const auto& f : fields()) t.*(f.member) = std::string(asset(std::string(f.name) + ".txt"));
    t.fewshot = FewShotSet::parse_json(asset("selector_fewshot.json"));
    return t;
}

void PromptTemplates::apply_overrides(const nlohmann::json& overrides) {
    if (overrides.is_null()) return;
    if (!overrides.is_object()) throw Error(ErrorKind::InvalidConfig, "templates must be an object");
    for (const auto& [key, value] : overrides.items()) {
        if (key == "fewshot") {
            fewshot = FewShotSet::parse_json(value.dump());
            continue;
        }
        const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return key == f.name; });
        if (it == fields().end()) throw Error(ErrorKind::InvalidConfig, "unknown template '" + key + "'");
        if (!value.is_string()) throw Error(ErrorKind::InvalidConfig, "template '" + key + "' must be a string");
        this->*(it->member) = value.get<std::string>();
    }
}

nlohmann::json PromptTemplates::overrides_from(const PromptTemplates& base) const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& f : fields()) {
        if (this->*(f.member) != base.*(f.member)) out[f.name] = this->*(f.member);
    }
    if (fewshot.to_json() != base.fewshot.to_json()) out["fewshot"] = fewshot.to_json();
    return out;
}

void PromptTemplates::validate() const {
    for (const auto& f : fields()) {
        const auto present = placeholders(this->*(f.member));
        for (const auto& r : f.required) {
            if (std::find(present.begin(), present.end(), r) == present.end()) {
                throw Error(ErrorKind::TemplateMissingPlaceholder, std::string(f.name) + " lacks {" + r + "}");
            }
        }
        for (const auto& p : present) {
            if (std::find(f.required.begin(), f.required.end(), p) == f.required.end()) {
                throw Error(ErrorKind::TemplateMissingPlaceholder,
                            std::string(f.name) + " uses unknown placeholder {" + p + "}");
            }
        }
    }
}

std::vector<backend::ChatMessage> build_selector_prompt(std::span<const std::string> tags, const std::string& object,
                                                        const PromptTemplates& templates) {
    if (tags.empty()) throw Error(ErrorKind::EmptyTagList, "selector prompt needs at least one tag");
    static const std::vector<std::string> kRequired = {"object", "tags"};
    std::string system = templates.selector_system;
    if (!templates.fewshot.exemplars.empty()) {
        system += "\n\nExamples:";
        for (const auto& ex : templates.fewshot.exemplars) {
            system += "\n\n";
            system += render(templates.selector_user, {{"object", ex.object}, {"tags", text::join(ex.tags, ", ")}},
                             kRequired);
            system += "\nAnswer: " + ex.answer;
        }
    }
    const std::vector<std::string> tag_list(tags.begin(), tags.end());
    const auto user =
        render(templates.selector_user, {{"object", object}, {"tags", text::join(tag_list, ", ")}}, kRequired);
    return {{"system", system}, {"user", user}};
}

}  // namespace pearl::prompts
