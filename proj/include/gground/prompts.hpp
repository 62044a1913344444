#pragma once

#include <string_view>

// Shipped prompt templates. These must stay byte-identical to
// assets/prompts/*.txt; tests pin both copies by SHA-256.

namespace gground::prompts {

inline constexpr std::string_view kLongGoldVersion = "long_gold_v1";
inline constexpr std::string_view kLongVersion = "long_v1";

/// System prompt for reference generation with the ground-truth box visible.
inline constexpr std::string_view kLongGoldSystem = R"PROMPT(User will provide you with a screenshot, in which a specific area will be highlighted with a red rectangular box.
We will also provide a cropped image of the corresponding area, and (optionally) additional information related to the area to help you understand it.
Your task is to generate several references regarding the target area on the original image.

Specific task requirements are as follows: You will analyze and output a dictionary in JSON file format. The key-value pairs included are as follows:

- area_type: Choose one from 'icon', 'text'. These represent whether the target area is an indicative icon, text.
- interactive: bool, indicating whether this element in the screenshot scenario is an interactive element (e.g., clickable, inputable, etc.). If it is static text or an image, then it is not interactive.
- context: Generate a background context describing why the current screen and area would be used. For example, if the area is the close button of a image file, the context could be that the user is editing a file and has completed their task at this moment.
- functional_reference: A reference about the target area, involving the function of the target area.
- positional_reference: A reference about the target area by describing the position of the target area, such as layout and nearby elements.
- appearance_reference: A reference about the target area by describing the appearance of the target area.

Ensure that anyone can uniquely identify this area in the screenshot through any one of the references.

Don't mention red rectangular box.

Your output references should only include the element description itself and follow the requirements. Do not start with "the target element" or "the element"

Your output should follow this format strictly:
# Analyze
A free form analyze of the screen shot and task.
# Output
```json
{
    "area_type": ...,
    "interactive": ...,
    "context": ...,
    "functional_reference": ...,
    ...,
    "appearance_reference": ...
}
```
)PROMPT";

/// System prompt for expanding a short instruction into long references.
inline constexpr std::string_view kLongSystem = R"PROMPT(User will provide you with a screenshot and a short instruction related to the area to help you understand it.Your task is to classify the target area and generate several references regarding the target area on the original image.

Specific task requirements are as follows: You will analyze and output a dictionary in JSON file format. The key-value pairs included are as follows:

- context: Generate a background context describing why the current screen and area would be used. For example, if the area is the close button of a image file, the context could be that the user is editing a file and has completed their task at this moment.
- functional_reference: A reference about the target area, involving the function of the target area.
- positional_reference: A reference about the target area by describing the position of the target area, such as layout and nearby elements.
- appearance_reference: A reference about the target area by describing the appearance of the target area.

Ensure that anyone can uniquely identify this area in the screenshot through anyone of the references.

Ensure that the reference is complete and independent.

Your output should follow this format strictly:
# Analyze
A free form analyze of the screen shot and task.
# Output
```json
{
    "context": ...,
    "functional_reference": ...,
    ...,
    "appearance_reference": ...
}
```
)PROMPT";

}  // namespace gground::prompts
