#include "oblique/detector.hpp"

#include <gtest/gtest.h>

#include "stubs.hpp"

using namespace oblique;

namespace {

std::set<std::string> selection(const LossTable& t, const char* kind, AttackMode mode) {
    return t.selection_for(kind, mode).components;
}

}  // namespace

// The per-model loss component choices are load-bearing: exact set equality
// for every cell.
TEST(LossTable, BuiltinRows) {
    const LossTable t = LossTable::builtin();
    using M = AttackMode;
    using S = std::set<std::string>;

    EXPECT_EQ(selection(t, "yolov3", M::kVanishing), S({"objectness"}));
    EXPECT_EQ(selection(t, "yolov3", M::kMislabeling), S({"class"}));
    EXPECT_EQ(selection(t, "yolov3", M::kUntargeted), S({"objectness", "class", "box"}));

    EXPECT_EQ(selection(t, "ssd", M::kVanishing), S({"class"}));
    EXPECT_EQ(selection(t, "ssd", M::kMislabeling), S({"class"}));
    EXPECT_EQ(selection(t, "ssd", M::kUntargeted), S({"class", "box"}));

    EXPECT_EQ(selection(t, "retinanet", M::kVanishing), S({"class"}));
    EXPECT_EQ(selection(t, "retinanet", M::kMislabeling), S({"class"}));
    EXPECT_EQ(selection(t, "retinanet", M::kUntargeted), S({"class", "box"}));

    EXPECT_EQ(selection(t, "faster_rcnn", M::kVanishing), S({"rpn.objectness", "det.class"}));
    EXPECT_EQ(selection(t, "faster_rcnn", M::kMislabeling), S({"det.class"}));
    EXPECT_EQ(selection(t, "faster_rcnn", M::kUntargeted),
              S({"rpn.objectness", "rpn.box", "det.class", "det.box"}));

    EXPECT_EQ(selection(t, "cascade_rcnn", M::kVanishing),
              S({"rpn1.objectness", "rpn2.class", "rpn3.class", "det.class"}));
    EXPECT_EQ(selection(t, "cascade_rcnn", M::kMislabeling),
              S({"rpn2.class", "rpn3.class", "det.class"}));
    EXPECT_EQ(selection(t, "cascade_rcnn", M::kUntargeted),
              S({"rpn1.objectness", "rpn1.box", "rpn2.class", "rpn2.box", "rpn3.class",
                 "rpn3.box", "det.class", "det.box"}));
}

// Untargeted rows must be the full training-loss set, i.e. supersets of the
// targeted rows of the same model.
TEST(LossTable, UntargetedCoversTargetedRows) {
    const LossTable t = LossTable::builtin();
    for (const char* kind : {"yolov3", "ssd", "retinanet", "faster_rcnn", "cascade_rcnn", "toy"}) {
        const auto all = selection(t, kind, AttackMode::kUntargeted);
        for (AttackMode mode : {AttackMode::kVanishing, AttackMode::kMislabeling}) {
            for (const std::string& c : selection(t, kind, mode)) {
                EXPECT_TRUE(all.count(c)) << kind << ": " << c;
            }
        }
    }
}

TEST(LossTable, UnknownKindThrowsUntilRegistered) {
    LossTable t = LossTable::builtin();
    EXPECT_THROW(t.selection_for("custom_kind", AttackMode::kVanishing), std::out_of_range);
    t.register_row("custom_kind", AttackMode::kVanishing, LossSelection{{"stage0.objectness"}});
    EXPECT_EQ(selection(t, "custom_kind", AttackMode::kVanishing),
              std::set<std::string>({"stage0.objectness"}));
    EXPECT_THROW(t.selection_for("custom_kind", AttackMode::kUntargeted), std::out_of_range);
}

TEST(AttackModeStrings, RoundTrip) {
    for (AttackMode m :
         {AttackMode::kVanishing, AttackMode::kMislabeling, AttackMode::kUntargeted}) {
        EXPECT_EQ(attack_mode_from_string(to_string(m)), m);
    }
    EXPECT_THROW(attack_mode_from_string("explode"), std::invalid_argument);
}

TEST(AdapterRegistry, CreatesRegisteredKinds) {
    AdapterRegistry registry;
    EXPECT_FALSE(registry.has("stub"));
    EXPECT_THROW(registry.create("stub"), std::out_of_range);

    registry.register_kind("stub", [] {
        return std::make_unique<stubs::StubAdapter>(std::vector<Detection>{});
    });
    ASSERT_TRUE(registry.has("stub"));
    auto adapter = registry.create("stub");
    EXPECT_EQ(adapter->kind(), "stub");
    EXPECT_EQ(registry.kinds(), std::vector<std::string>({"stub"}));
}

TEST(ImageTensor, IndexingIsHwc) {
    ImageTensor t = ImageTensor::zeros(4, 3, 3);
    EXPECT_EQ(t.data.size(), 36u);
    t.at(2, 1, 0) = 0.5;
    EXPECT_DOUBLE_EQ(t.data[(1 * 4 + 2) * 3 + 0], 0.5);
    EXPECT_TRUE(t.same_shape(ImageTensor::zeros(4, 3, 3)));
    EXPECT_FALSE(t.same_shape(ImageTensor::zeros(3, 4, 3)));
}
