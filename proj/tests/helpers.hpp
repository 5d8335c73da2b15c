#pragma once

// Shared fixtures for the test suites.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "fareval/alignment.hpp"
#include "fareval/core.hpp"

namespace testutil {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("fareval-" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        auto p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

// Small 8-dimension registry in the page schema's shape. Geo labels reuse the
// real subregion names so the Oceania collapse is exercised.
inline fareval::GroupSpace mini_registry(bool with_backgrounds = true) {
    using fareval::DimensionSpec;
    fareval::GroupSpace space;
    auto add = [&](DimensionSpec d) { space.dims.push_back(std::move(d)); };

    DimensionSpec sub_geo;
    sub_geo.name = "sub-geo";
    sub_geo.labels = {"@UNKNOWN", "Northern America", "Northern Europe", "Oceania", "Southern Europe"};
    sub_geo.unknown_index = 0;
    if (with_backgrounds) sub_geo.background = {0.4, 0.3, 0.1, 0.2};
    add(sub_geo);

    DimensionSpec src_geo = sub_geo;
    src_geo.name = "src-geo";
    if (with_backgrounds) src_geo.background = {0.25, 0.25, 0.25, 0.25};
    add(src_geo);

    DimensionSpec gender;
    gender.name = "gender";
    gender.labels = {"@UNKNOWN", "female", "male", "NB"};
    gender.unknown_index = 0;
    if (with_backgrounds) gender.background = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    add(gender);

    DimensionSpec occ;
    occ.name = "occ";
    occ.labels = {"@UNKNOWN", "artist", "scientist", "writer", "athlete"};
    occ.unknown_index = 0;
    add(occ);

    DimensionSpec alpha;
    alpha.name = "alpha";
    alpha.labels = {"a-d", "e-k", "l-r", "s-"};
    add(alpha);

    DimensionSpec age;
    age.name = "age";
    age.labels = {"2001-2006", "2007-2011", "2012-2016", "2017-2022"};
    add(age);

    DimensionSpec pop;
    pop.name = "pop";
    pop.labels = {"High", "Low", "Medium-High", "Medium-Low"};
    add(pop);

    DimensionSpec langs;
    langs.name = "langs";
    langs.labels = {"2-4 languages", "5+ languages", "English only"};
    add(langs);

    space.validate();
    return space;
}

inline fareval::PageRecord make_record(std::int64_t id) {
    fareval::PageRecord rec;
    rec.page_id = id;
    rec.first_letter_category = "a-d";
    rec.creation_date_category = "2001-2006";
    rec.relative_pageviews_category = "High";
    rec.num_sitelinks_category = "English only";
    rec.quality = "C";
    return rec;
}

}  // namespace testutil
