#pragma once

#include <string>
#include <vector>

namespace teo {

// Class vocabularies shared by the prompt builder, the fixture generator,
// and evaluation. Option lists rendered into prompts come from here, so a
// ground-truth class is always present among the prompt options.

const std::vector<std::string>& damage_classes();     // No damage ... Destroyed
const std::vector<std::string>& change_kinds();       // constructed | demolished
const std::vector<std::string>& urban_change_types(); // Residential ...
const std::vector<std::string>& urban_status_classes();
const std::vector<std::string>& disaster_types();
const std::vector<std::string>& scene_classes();      // 62 land-use categories

}  // namespace teo
