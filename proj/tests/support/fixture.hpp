#pragma once

#include <filesystem>
#include <memory>

#include "quadplan/world.hpp"

#ifndef QUADPLAN_TEST_DATA_DIR
#error "QUADPLAN_TEST_DATA_DIR must be defined"
#endif

namespace testing_support {

inline std::filesystem::path data_dir() { return QUADPLAN_TEST_DATA_DIR; }
inline std::filesystem::path fixture_map() { return data_dir() / "maps" / "tower2_floor9.json"; }

inline std::shared_ptr<const quadplan::WaypointWorld> fixture_world() {
    static const auto world = std::make_shared<const quadplan::WaypointWorld>(quadplan::load_world(fixture_map()));
    return world;
}

inline constexpr const char* kSingleRoom =
    "Saya ingin mengambil barang di lemari lab, kemudian ingin menyoldernya.";
inline constexpr const char* kMultiRoomShort =
    "Saya ingin mengambil barang di lemari lab, kemudian juga mengambil barang di meja solder. Setelah itu saya "
    "ingin pergi ke lab TW903";
inline constexpr const char* kMultiRoomLong =
    "Ada acara halal bi halal di lantai 10. Namun sebelum itu, saya perlu mengambil sendok yang ada di lemari lab, "
    "kue di dalam pantry dan piring yang ada di lemari pantry. Saya ingin turun dengan lift terdekat dari pantry";
inline constexpr const char* kCrossZone =
    "Saya ingin konsultasi ke lantai 2, tapi sebelumnya ambil hasil solderan dan pergi ke pantry serta toilet.";

}  // namespace testing_support
