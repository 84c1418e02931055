#include "seccoder/integrator.hpp"

#include "seccoder/error.hpp"
#include "seccoder/templates.hpp"
#include "seccoder/tokenize.hpp"

namespace seccoder {
namespace {

constexpr std::string_view kDemo = "{demo}";
constexpr std::string_view kBody = "{body}";

struct TemplateParts {
  std::string_view head;   // before {demo}
  std::string_view fence;  // between {demo} and {body}
  std::string_view tail;   // after {body}
};

TemplateParts split_template(Language lang) {
  const std::string_view t = integration_template(lang);
  const auto d = t.find(kDemo);
  const auto b = t.find(kBody);
  return {t.substr(0, d), t.substr(d + kDemo.size(), b - d - kDemo.size()),
          t.substr(b + kBody.size())};
}

}  // namespace

std::string_view integration_template(Language lang) noexcept {
  return lang == Language::python ? std::string_view(templates::kPython)
                                  : std::string_view(templates::kCpp);
}

std::string template_wrap(std::string_view code, Language lang) {
  const TemplateParts p = split_template(lang);
  if (!code.empty() && code.back() == '\n') code.remove_suffix(1);
  std::string out;
  out.reserve(p.head.size() + code.size() + p.fence.size());
  out.append(p.head).append(code).append(p.fence);
  return out;
}

std::string render_plain(const PromptCase& prompt) {
  if (prompt.code_prefix.empty()) return prompt.description;
  return prompt.description + "\n" + prompt.code_prefix;
}

bool starts_with_demo_block(std::string_view text) noexcept {
  for (Language lang : {Language::python, Language::cpp}) {
    const std::string_view t = integration_template(lang);
    const std::string_view head = t.substr(0, t.find(kDemo));
    if (text.substr(0, head.size()) == head) return true;
  }
  return false;
}

AugmentedPrompt integrate(const PromptCase& prompt, const SecureCodeEntry& demo,
                          std::optional<std::size_t> context_budget) {
  if (prompt.language != demo.language) {
    throw ValidationError("language mismatch: prompt " + prompt.id + " is " +
                          std::string(to_string(prompt.language)) + " but demonstration " +
                          demo.id + " is " + std::string(to_string(demo.language)));
  }
  const std::string body = render_plain(prompt);
  if (starts_with_demo_block(body)) {
    throw ValidationError("prompt " + prompt.id + " already carries a demonstration");
  }
  std::string text = template_wrap(demo.code, prompt.language);
  text += body;
  text.append(split_template(prompt.language).tail);
  if (context_budget) {
    const std::size_t total = count_tokens(text);
    if (total > *context_budget) {
      throw ValidationError("augmented prompt " + prompt.id + " has " + std::to_string(total) +
                            " tokens (demonstration " + std::to_string(count_tokens(demo.code)) +
                            ", prompt " + std::to_string(count_tokens(body)) +
                            "), over the context budget of " + std::to_string(*context_budget));
    }
  }
  return {std::move(text), prompt.id, demo.id, prompt.language};
}

std::optional<std::string> extract_demo(std::string_view prompt_text) {
  for (Language lang : {Language::python, Language::cpp}) {
    const TemplateParts p = split_template(lang);
    if (prompt_text.substr(0, p.head.size()) != p.head) continue;
    const std::string_view rest = prompt_text.substr(p.head.size());
    const auto end = rest.find(p.fence);
    if (end == std::string_view::npos) return std::nullopt;
    return std::string(rest.substr(0, end));
  }
  return std::nullopt;
}

}  // namespace seccoder
