// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "ctxprobe/error.hpp"
#include "ctxprobe/protocol.hpp"
#include "ctxprobe/synth.hpp"
#include "support.hpp"

using namespace ctxprobe;

namespace ctxprobe {
// Readable parameter names in ctest output.
void PrintTo(Task t, std::ostream *os) { *os << to_string(t); }
void PrintTo(Condition c, std::ostream *os) { *os << to_string(c); }
} // namespace ctxprobe

namespace {

std::string read_golden(const std::string &name) {
    std::ifstream in(std::string(CTXPROBE_SOURCE_DIR) + "/tests/golden/" + name);
    EXPECT_TRUE(in.good()) << name;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<PromptOption> numbered(std::vector<std::string> labels) {
    std::vector<PromptOption> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({int(i + 1), labels[i]});
    return out;
}

ObjectInstance instance(const std::string &id, const std::string &scene, const std::string &label) {
    ObjectInstance i;
    i.instance_id = id;
    i.image_id = id.substr(0, id.find('#'));
    i.scene = scene;
    i.object_label = label;
    i.superordinate = *superordinate_of(scene);
    i.mask = BinaryMask(4, 4);
    return i;
}

std::vector<ObjectInstance> ten_instances() {
    const auto pool = synth::default_pool();
    std::vector<ObjectInstance> out;
    int n = 0;
    for (const auto &[scene, labels] : pool.entries()) {
        out.push_back(instance("img" + std::to_string(n) + "#0", scene, labels[n % labels.size()]));
        ++n;
    }
    out.push_back(instance("img8#1", "kitchen", "stove"));
    out.push_back(instance("img9#0", "coast", "boat"));
    return out;
}

} // namespace

class Golden : public ::testing::TestWithParam<std::tuple<Task, Condition>> {};

TEST_P(Golden, RenderedPromptMatchesCheckedInFile) {
    const auto [task, condition] = GetParam();
    std::vector<PromptOption> options;
    switch (task) {
    case Task::scene:
        options = numbered({"kitchen", "coast", "bedroom", "forest", "living room", "skyline",
                            "bathroom", "mountain"});
        break;
    case Task::superordinate:
        options = numbered({"outdoor", "indoor"});
        break;
    case Task::object:
        options = numbered({"towel", "stove", "pillow", "boat", "sofa", "fern", "rock", "antenna"});
        break;
    }
    const std::string name =
        std::string(to_string(task)) + "_" + std::string(to_string(condition)) + ".txt";
    EXPECT_EQ(render_prompt(task, condition, options), read_golden(name));
}

INSTANTIATE_TEST_SUITE_P(AllTasksAndConditions, Golden,
                         ::testing::Combine(::testing::Values(Task::scene, Task::superordinate,
                                                              Task::object),
                                            ::testing::Values(Condition::full_scene,
                                                              Condition::object_only)),
                         [](const auto &info) {
                             return std::string(to_string(std::get<0>(info.param))) + "_" +
                                    std::string(to_string(std::get<1>(info.param)));
                         });

TEST(Plan, CountsAndStructure) {
    const auto instances = ten_instances();
    const auto plans = build_prompt_plan(instances, synth::default_pool());
    ASSERT_EQ(plans.size(), 60u);
    for (const auto &p : plans) {
        for (std::size_t i = 0; i < p.options.size(); ++i) EXPECT_EQ(p.options[i].index, int(i + 1));
        const auto &truth = p.task == Task::scene           ? p.scene
                            : p.task == Task::superordinate ? std::string(to_string(p.superordinate))
                                                            : p.target_object_label;
        EXPECT_EQ(std::count_if(p.options.begin(), p.options.end(),
                                [&](const PromptOption &o) { return o.label == truth; }),
                  1);
        EXPECT_EQ(p.truth_label(), truth);
        EXPECT_EQ(render_prompt(p), p.prompt_text);
        EXPECT_EQ(p.trial_id, trial_id_for(p.instance_id, p.condition, p.task));
        if (p.task == Task::superordinate) EXPECT_EQ(p.options.size(), 2u);
        if (p.task != Task::superordinate) EXPECT_EQ(p.options.size(), 8u);
        if (p.task == Task::scene) {
            std::vector<std::string> labels;
            for (const auto &o : p.options) labels.push_back(o.label);
            std::sort(labels.begin(), labels.end());
            auto cats = default_categories();
            std::sort(cats.begin(), cats.end());
            EXPECT_EQ(labels, cats);
        }
    }
}

TEST(Plan, SerializationIsDeterministicAndRoundTrips) {
    const auto instances = ten_instances();
    std::stringstream a, b;
    const auto plans = build_prompt_plan(instances, synth::default_pool());
    write_plans(a, plans);
    write_plans(b, build_prompt_plan(instances, synth::default_pool()));
    EXPECT_EQ(a.str(), b.str());

    testutil::TempDir dir;
    {
        std::ofstream out(dir / "plan.jsonl");
        out << a.str();
    }
    EXPECT_EQ(read_plans(dir / "plan.jsonl"), plans);
}

TEST(Plan, TamperedPromptTextIsRejected) {
    const auto plans = build_prompt_plan(ten_instances(), synth::default_pool());
    auto j = nlohmann::json::parse(plan_to_json(plans[0]).dump());
    j["prompt_text"] = j["prompt_text"].get<std::string>() + " ";
    EXPECT_THROW(plan_from_json(j), ValidationError);
    j = nlohmann::json::parse(plan_to_json(plans[0]).dump());
    j["options"][0]["index"] = 2;
    EXPECT_THROW(plan_from_json(j), ValidationError);
}

TEST(Plan, InstanceOrderDrivesTheGeneratorStream) {
    const auto all = ten_instances();
    const std::vector<ObjectInstance> ab = {all[0], all[1]};
    const std::vector<ObjectInstance> ba = {all[1], all[0]};
    const auto pool = synth::default_pool();
    const auto plans_ab = build_prompt_plan(ab, pool);
    const auto plans_ba = build_prompt_plan(ba, pool);
    const auto only_b = build_prompt_plan(std::vector{all[1]}, pool);
    // The stream starts with whichever instance comes first.
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(plans_ba[i], only_b[i]);
    bool any_difference = false;
    for (std::size_t i = 0; i < 6; ++i) any_difference |= plans_ab[6 + i] != plans_ba[i];
    EXPECT_TRUE(any_difference);
}

TEST(Plan, EmptyPoolEntryNamesTheScene) {
    auto entries = synth::default_pool().entries();
    entries["forest"].clear();
    try {
        build_prompt_plan(ten_instances(), DistractorPool(entries));
        FAIL() << "expected ValidationError";
    } catch (const ValidationError &e) {
        EXPECT_NE(std::string(e.what()).find("forest"), std::string::npos);
    }
}

TEST(Distractors, OnePerOtherSceneWithoutTarget) {
    const auto pool = synth::default_pool();
    const auto cats = default_categories();
    CounterRng rng(1);
    const auto target = instance("x#0", "kitchen", "stove");
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = sample_distractors(target, pool, cats, rng);
        ASSERT_EQ(d.size(), 7u);
        std::size_t k = 0;
        for (const auto &scene : cats) {
            if (scene == "kitchen") continue;
            const auto &labels = pool.labels(scene);
            EXPECT_NE(std::find(labels.begin(), labels.end(), d[k]), labels.end());
            EXPECT_NE(d[k], "stove");
            ++k;
        }
    }
}

TEST(Distractors, SingleEntryPoolIsForced) {
    std::map<std::string, std::vector<std::string>> entries;
    for (const auto &c : default_categories()) entries[c] = {c + "-thing"};
    const DistractorPool pool(entries);
    CounterRng r1(1), r2(2);
    const auto target = instance("x#0", "coast", "boat");
    EXPECT_EQ(sample_distractors(target, pool, default_categories(), r1),
              sample_distractors(target, pool, default_categories(), r2));
}

TEST(Distractors, PoolHoldingOnlyTheTargetIsAnError) {
    std::map<std::string, std::vector<std::string>> entries;
    for (const auto &c : default_categories()) entries[c] = {c + "-thing"};
    entries["forest"] = {"boat"};
    const DistractorPool pool(entries);
    CounterRng rng(1);
    EXPECT_THROW(sample_distractors(instance("x#0", "coast", "boat"), pool, default_categories(), rng),
                 ValidationError);
}

TEST(Distractors, DrawsAreUniformOverAFiveEntryPool) {
    std::map<std::string, std::vector<std::string>> entries = {
        {"coast", {"a"}}, {"forest", {"p", "q", "r", "s", "t"}}};
    const DistractorPool pool(entries);
    const std::vector<std::string> cats = {"coast", "forest"};
    CounterRng rng(42);
    std::map<std::string, int> freq;
    for (int i = 0; i < 100; ++i) {
        ++freq[sample_distractors(instance("x#0", "coast", "a"), pool, cats, rng).at(0)];
    }
    // Binomial(100, 1/5): mean 20, sd 4.
    for (const auto &l : {"p", "q", "r", "s", "t"}) {
        EXPECT_GE(freq[l], 8) << l;
        EXPECT_LE(freq[l], 32) << l;
    }
}

TEST(Distractors, DuplicatePoolLabelsAreRejected) {
    EXPECT_THROW(DistractorPool({{"coast", {"boat", "boat"}}}), ValidationError);
}

TEST(Shuffle, OptionOrderIsUniformOverPermutations) {
    // 3 items, 6000 shuffles over seeds: chi-square with 5 df; 0.1% critical value 20.515.
    std::map<std::vector<int>, int> counts;
    for (std::uint64_t seed = 0; seed < 6000; ++seed) {
        std::vector<int> v = {0, 1, 2};
        CounterRng rng(seed);
        rng.shuffle(std::span<int>(v));
        ++counts[v];
    }
    ASSERT_EQ(counts.size(), 6u);
    double chi2 = 0.0;
    for (const auto &[perm, n] : counts) chi2 += (n - 1000.0) * (n - 1000.0) / 1000.0;
    EXPECT_LT(chi2, 20.515);
}

TEST(Shuffle, TruthPositionInScenePlansIsUniform) {
    // Position of the true scene over 400 instances: chi-square with 7 df;
    // 0.1% critical value 24.322.
    std::vector<ObjectInstance> instances;
    for (int i = 0; i < 400; ++i) {
        instances.push_back(instance("img" + std::to_string(i) + "#0", "kitchen", "stove"));
    }
    const auto plans = build_prompt_plan(instances, synth::default_pool());
    std::vector<int> pos(8, 0);
    int n = 0;
    for (const auto &p : plans) {
        if (p.task != Task::scene) continue;
        ++pos[p.correct_index - 1];
        ++n;
    }
    double chi2 = 0.0;
    const double e = n / 8.0;
    for (int c : pos) chi2 += (c - e) * (c - e) / e;
    EXPECT_LT(chi2, 24.322);
}
