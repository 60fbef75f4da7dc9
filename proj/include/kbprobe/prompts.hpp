#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace kbprobe {

// Registry of the prompt templates used by the policies and the judges.
// Placeholders are {name} tokens; substitution is a single pass over the
// template, so substituted values are never re-scanned.
class prompt_registry {
 public:
  // All eleven built-in templates.
  static prompt_registry defaults();

  static const std::vector<std::string>& keys();

  const std::string& raw(std::string_view key) const;

  // Replaces template text from a file or config override.
  void set(std::string_view key, std::string text);

  std::string render(std::string_view key,
                     const std::map<std::string, std::string>& subs) const;

 private:
  std::map<std::string, std::string> templates_;
};

// Renders {name} placeholders in an arbitrary template string.
std::string render_template(std::string_view tmpl,
                            const std::map<std::string, std::string>& subs);

}  // namespace kbprobe
