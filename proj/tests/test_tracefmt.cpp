// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ctxprobe/error.hpp"
#include "ctxprobe/protocol.hpp"
#include "ctxprobe/tracefmt.hpp"
#include "support.hpp"

using namespace ctxprobe;
using namespace ctxprobe::trace;

namespace {

TraceHeader small_header(std::uint16_t flags = kFlagReduced | kFlagRaw) {
    TraceHeader h;
    h.flags = flags;
    h.grid_rows = 2;
    h.grid_cols = 3;
    h.layer_count = 2;
    h.hidden_dim = flags & kFlagRaw ? 3 : 0;
    h.labels = {{"kitchen", 1001}, {"indoor", 1002}, {"outdoor", 1003}};
    return h;
}

TrialTrace record(const TraceHeader &h, const std::string &instance, Condition c,
                  std::vector<std::uint32_t> patches, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<float> nd;
    TrialTrace t;
    t.trial_id = image_trial_key(instance, c);
    t.condition = c;
    t.patch_indices = std::move(patches);
    const std::size_t p = t.patch_indices.size();
    if (h.has_reduced()) {
        t.logits.resize(h.layer_count * t.logit_rows(h) * h.labels.size());
        for (auto &v : t.logits) v = nd(gen);
        if (c == Condition::object_only) {
            t.cosines.resize(h.layer_count * p);
            for (auto &v : t.cosines) v = nd(gen);
        }
    }
    if (h.has_raw()) {
        t.raw.resize(h.layer_count * p * h.hidden_dim);
        for (auto &v : t.raw) v = nd(gen);
    }
    return t;
}

std::vector<TrialTrace> small_trials(const TraceHeader &h) {
    return {record(h, "a#0", Condition::full_scene, {0, 4}, 1),
            record(h, "a#0", Condition::object_only, {0, 4}, 2),
            record(h, "b#1", Condition::full_scene, {}, 3),
            record(h, "b#1", Condition::object_only, {}, 4)};
}

std::vector<PromptPlan> plans_for(const std::vector<std::string> &instances) {
    std::vector<PromptPlan> out;
    for (const auto &id : instances) {
        for (const auto c : kConditions) {
            PromptPlan p;
            p.instance_id = id;
            p.condition = c;
            p.task = Task::superordinate;
            p.trial_id = trial_id_for(id, c, p.task);
            p.options = {{1, "indoor"}, {2, "outdoor"}};
            p.correct_index = 1;
            out.push_back(p);
            p.task = Task::scene;
            p.trial_id = trial_id_for(id, c, p.task);
            p.options = {{1, "kitchen"}};
            out.push_back(p);
        }
    }
    return out;
}

} // namespace

TEST(TraceFormat, RoundTripAllFlagCombinations) {
    for (std::uint16_t flags : {std::uint16_t(kFlagReduced), std::uint16_t(kFlagRaw),
                                std::uint16_t(kFlagReduced | kFlagRaw),
                                std::uint16_t(kFlagReduced | kFlagFullGridLogits)}) {
        const auto h = small_header(flags);
        const auto trials = small_trials(h);
        const auto bytes = encode_trace(h, trials);
        std::size_t expected = h.encoded_size() + 8;
        for (const auto &t : trials) expected += t.encoded_size(h);
        EXPECT_EQ(bytes.size(), expected);
        const auto back = decode_trace(bytes);
        EXPECT_EQ(back.header, h);
        EXPECT_EQ(back.trials, trials);
    }
}

TEST(TraceFormat, FileRoundTripAndLayout) {
    const auto h = small_header();
    const auto trials = small_trials(h);
    testutil::TempDir dir;
    write_trace(h, trials, dir / "t.ocpt");
    const auto back = read_trace(dir / "t.ocpt");
    EXPECT_EQ(back.trials, trials);
    const auto bytes = encode_trace(h, trials);
    EXPECT_EQ(std::memcmp(bytes.data(), "OCPT", 4), 0);
    EXPECT_EQ(bytes[4] | bytes[5] << 8, 1); // version, little-endian
    std::uint64_t count = 0;
    std::memcpy(&count, bytes.data() + bytes.size() - 8, 8);
    EXPECT_EQ(count, trials.size());
}

TEST(TraceFormat, LogitAccessorAndFullGrid) {
    const auto h = small_header(kFlagReduced | kFlagFullGridLogits);
    const auto t = record(h, "a#0", Condition::full_scene, {1}, 9);
    EXPECT_EQ(t.logit_rows(h), 6u);
    EXPECT_EQ(t.logit(h, 1, 5, 2), t.logits[(1 * 6 + 5) * 3 + 2]);
    EXPECT_EQ(h.label_column("indoor"), 1u);
    EXPECT_FALSE(h.label_column("forest"));
}

TEST(TraceFormat, EveryTruncationIsReported) {
    const auto h = small_header();
    const auto bytes = encode_trace(h, small_trials(h));
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
        const std::span<const std::uint8_t> part(bytes.data(), cut);
        EXPECT_THROW(decode_trace(part), FormatError) << "cut at " << cut;
    }
    // A cut inside a record names the offset and the record.
    const std::span<const std::uint8_t> part(bytes.data(), h.encoded_size() + 5);
    try {
        decode_trace(part);
        FAIL();
    } catch (const FormatError &e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
        EXPECT_NE(msg.find("record 0"), std::string::npos) << msg;
    }
}

TEST(TraceFormat, BadMagicVersionAndFooter) {
    const auto h = small_header();
    auto bytes = encode_trace(h, small_trials(h));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_trace(bad), FormatError);
    bad = bytes;
    bad[4] = 9;
    EXPECT_THROW(decode_trace(bad), FormatError);
    bad = bytes;
    bad[bad.size() - 8] ^= 1;
    EXPECT_THROW(decode_trace(bad), FormatError);
    bad = bytes;
    bad.push_back(0);
    EXPECT_THROW(decode_trace(bad), FormatError);
}

TEST(TraceFormat, FuzzedBytesNeverCrash) {
    const auto h = small_header();
    const auto bytes = encode_trace(h, small_trials(h));
    std::mt19937 gen(5);
    int rejected = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        auto b = bytes;
        const int flips = 1 + gen() % 4;
        for (int f = 0; f < flips; ++f) b[gen() % b.size()] = static_cast<std::uint8_t>(gen());
        try {
            const auto t = decode_trace(b);
            for (const auto &r : t.trials) r.validate(t.header);
        } catch (const Error &) {
            ++rejected;
        }
    }
    EXPECT_GT(rejected, 0);
}

TEST(TraceFormat, WriterRejectsLayoutViolations) {
    const auto h = small_header();
    auto trials = small_trials(h);
    trials[0].patch_indices = {4, 0};
    EXPECT_THROW(encode_trace(h, trials), ValidationError);
    trials = small_trials(h);
    trials[1].patch_indices = {0, 6};
    EXPECT_THROW(encode_trace(h, trials), ValidationError);
    trials = small_trials(h);
    trials[1].cosines.pop_back();
    EXPECT_THROW(encode_trace(h, trials), ValidationError);
}

TEST(TraceFormat, NanPayloadRaisesWarning) {
    const auto h = small_header();
    auto trials = small_trials(h);
    trials[1].cosines[0] = std::numeric_limits<float>::quiet_NaN();
    const auto back = decode_trace(encode_trace(h, trials));
    EXPECT_TRUE(back.trials[1].nan_warning);
    EXPECT_FALSE(back.trials[0].nan_warning);
    const auto rep = validate_trace(back.header, back.trials, plans_for({"a#0", "b#1"}));
    EXPECT_TRUE(rep.clean());
    EXPECT_EQ(rep.warnings.size(), 1u);
}

TEST(TraceValidate, CleanTraceAndEachIssue) {
    const auto h = small_header();
    const auto trials = small_trials(h);
    const auto plans = plans_for({"a#0", "b#1"});
    EXPECT_TRUE(validate_trace(h, trials, plans).clean());

    auto missing_label = h;
    missing_label.labels.pop_back();
    EXPECT_FALSE(validate_trace(missing_label, trials, plans).clean());

    auto dup = trials;
    dup.push_back(trials[0]);
    EXPECT_FALSE(validate_trace(h, dup, plans).clean());

    auto stray = trials;
    stray.push_back(record(h, "c#0", Condition::full_scene, {}, 7));
    EXPECT_FALSE(validate_trace(h, stray, plans).clean());

    auto unpaired = std::vector<TrialTrace>{trials[1], trials[2], trials[3]};
    const auto rep = validate_trace(h, unpaired, plans);
    EXPECT_FALSE(rep.clean());
    EXPECT_FALSE(rep.warnings.empty()); // a#0|full_scene has no record

    auto differing = trials;
    differing[1] = record(h, "a#0", Condition::object_only, {0, 5}, 2);
    EXPECT_FALSE(validate_trace(h, differing, plans).clean());

    auto mislabeled = trials;
    mislabeled[0].condition = Condition::object_only;
    mislabeled[0].cosines.assign(h.layer_count * 2, 0.5f);
    EXPECT_FALSE(validate_trace(h, mislabeled, plans).clean());
}
