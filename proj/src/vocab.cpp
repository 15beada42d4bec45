#include "teo/vocab.hpp"

namespace teo {

const std::vector<std::string>& damage_classes() {
    static const std::vector<std::string> v = {"No damage", "Minor Damage", "Major Damage",
                                               "Destroyed"};
    return v;
}

const std::vector<std::string>& change_kinds() {
    static const std::vector<std::string> v = {"constructed", "demolished"};
    return v;
}

const std::vector<std::string>& urban_change_types() {
    static const std::vector<std::string> v = {"Residential", "Commercial",   "Industrial",
                                               "Road",        "Demolition",   "Mega Projects"};
    return v;
}

const std::vector<std::string>& urban_status_classes() {
    static const std::vector<std::string> v = {
        "Prior Construction",  "Greenland",           "Land Cleared",
        "Excavation",          "Materials Dumped",    "Construction Started",
        "Construction Midway", "Construction Done",   "Operational"};
    return v;
}

const std::vector<std::string>& disaster_types() {
    static const std::vector<std::string> v = {"hurricane", "flood",   "earthquake", "wildfire",
                                               "tornado",   "tsunami", "volcanic eruption"};
    return v;
}

const std::vector<std::string>& scene_classes() {
    static const std::vector<std::string> v = {
        "Airport",
        "Airport hangar",
        "Airport terminal",
        "Amusement park",
        "Aquaculture",
        "Archaeological site",
        "Barn",
        "Border checkpoint",
        "Burial site",
        "Car dealership",
        "Construction site",
        "Crop field",
        "Dam",
        "Debris or rubble",
        "Educational institution",
        "Electric substation",
        "Factory or powerplant",
        "Fire station",
        "Flooded road",
        "Fountain",
        "Gas station",
        "Golf course",
        "Ground transportation station",
        "Helipad",
        "Hospital",
        "Impoverished settlement",
        "Interchange",
        "Lake or pond",
        "Lighthouse",
        "Military facility",
        "Multi-unit residential",
        "Nuclear powerplant",
        "Office building",
        "Oil or gas facility",
        "Park",
        "Parking lot or garage",
        "Place of worship",
        "Police station",
        "Port",
        "Prison",
        "Race track",
        "Railway bridge",
        "Recreational facility",
        "Road bridge",
        "Runway",
        "Shipyard",
        "Shopping mall",
        "Single-unit residential",
        "Smokestack",
        "Solar farm",
        "Space facility",
        "Stadium",
        "Storage tank",
        "Surface mine",
        "Swimming pool",
        "Toll booth",
        "Tower",
        "Tunnel opening",
        "Waste disposal",
        "Water treatment facility",
        "Wind farm",
        "Zoo"};
    return v;
}

}  // namespace teo
