#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "memjack/backends.hpp"
#include "memjack/errors.hpp"
#include "memjack/rng.hpp"
#include "memjack/sim_tags.hpp"

using namespace memjack;

namespace {

SimVictimProfile test_profile(double base, double gain = 0.0, uint64_t seed = 42) {
    SimVictimProfile p;
    p.vulnerable_combos = {{"concealment", 3}};
    p.base_success_prob = base;
    p.escalation_gain = gain;
    p.seed = seed;
    return p;
}

std::vector<ChatTurn> victim_turns(const std::string& anchor, const std::string& cat, int angle,
                                   int prior_rounds) {
    std::vector<ChatTurn> turns;
    for (int i = 0; i < prior_rounds; ++i) {
        turns.push_back({TurnRole::user, "earlier probe " + make_meta_tag(anchor, cat, angle), ""});
        turns.push_back({TurnRole::assistant, "earlier reply", ""});
    }
    turns.push_back({TurnRole::user, "current probe " + make_meta_tag(anchor, cat, angle), ""});
    return turns;
}

}  // namespace

TEST_CASE("sim backends are pure functions of (seed, turns digest)") {
    SimWorld world;
    world.seed = 9;
    SimVictimBackend victim(test_profile(0.5), world);
    auto turns = victim_turns("item x", "concealment", 3, 1);
    CHECK(victim.chat(turns, 0.7) == victim.chat(turns, 0.7));

    SimPlannerBackend planner(world, 1);
    std::vector<ChatTurn> preq{{TurnRole::user, "IMAGE: img-7\nPOLICY: concealment\n", ""}};
    CHECK(planner.chat(preq, 0.7) == planner.chat(preq, 0.7));

    SimAttackerBackend attacker(3);
    std::vector<ChatTurn> areq{
        {TurnRole::user,
         "TASK: generate-candidates\nCOUNT: 4\nANGLE: 2\nFRAMING: look at the vase\n"
         "ANCHOR-KEY: vase\nCATEGORY: general\n",
         ""}};
    CHECK(attacker.chat(areq, 0.7) == attacker.chat(areq, 0.7));
}

TEST_CASE("sim victim with certain success emits an unsafe-marked fixture") {
    // Hand evaluation of the profile logic: the combo is vulnerable and
    // baseSuccessProb = 1, so any draw succeeds.
    SimVictimProfile p = test_profile(1.0);
    RngStream rng(7, "fixture");
    VictimReply reply = sim_victim_respond(p, "concealment", 3, 0, rng);
    CHECK(reply.ground_truth == SafetyLabel::unsafe);
    CHECK(reply.text.find("label=unsafe") != std::string::npos);

    SimWorld world;
    SimVictimBackend victim(p, world);
    std::string text = victim.chat(victim_turns("item x", "concealment", 3, 0), 0.7);
    CHECK(text.find("label=unsafe") != std::string::npos);
}

TEST_CASE("sim victim failure paths") {
    SUBCASE("combo not vulnerable: label safe, defense drawn from the mix") {
        SimVictimProfile p = test_profile(1.0);
        p.defense_mix = {1.0, 0, 0, 0, 0, 0};  // always directRefusal
        RngStream rng(11, "non-vulnerable");
        VictimReply reply = sim_victim_respond(p, "other-category", 3, 5, rng);
        CHECK(reply.ground_truth == SafetyLabel::safe);
        CHECK(reply.defense == DefensePattern::directRefusal);
        CHECK(fixture_defense_tag(reply.text) == DefensePattern::directRefusal);
    }
    SUBCASE("base 0.5 gain 0.25 at round 2: success probability exactly 1") {
        SimVictimProfile p = test_profile(0.5, 0.25);
        for (uint64_t seed = 0; seed < 20; ++seed) {
            RngStream rng(seed, "certain");
            CHECK(sim_victim_respond(p, "concealment", 3, 2, rng).ground_truth ==
                  SafetyLabel::unsafe);
        }
    }
    SUBCASE("close-call failures on the vulnerable combo read as controversial") {
        // base 0: the draw decides; draws under the near-miss margin are
        // controversial, the rest safe, and only the vulnerable combo ever
        // yields controversial labels.
        SimVictimProfile p = test_profile(0.0);
        int controversial = 0, safe = 0;
        for (uint64_t seed = 0; seed < 40; ++seed) {
            RngStream rng(seed, "nearmiss");
            auto label = sim_victim_respond(p, "concealment", 3, 0, rng).ground_truth;
            (label == SafetyLabel::controversial ? controversial : safe)++;

            RngStream rng2(seed, "nearmiss");
            CHECK(sim_victim_respond(p, "unrelated", 3, 0, rng2).ground_truth ==
                  SafetyLabel::safe);
        }
        CHECK(controversial > 0);
        CHECK(safe > 0);
    }
}

TEST_CASE("sim victim counts prior rounds on the same anchor for escalation") {
    // base 0, gain 1: round index 0 always fails, round index >= 1 always
    // succeeds; the backend must recover the index from the conversation.
    SimVictimProfile p = test_profile(0.0, 1.0);
    SimWorld world;
    SimVictimBackend victim(p, world);
    CHECK(victim.chat(victim_turns("item x", "concealment", 3, 0), 0.7).find("label=unsafe") ==
          std::string::npos);
    CHECK(victim.chat(victim_turns("item x", "concealment", 3, 1), 0.7).find("label=unsafe") !=
          std::string::npos);
}

TEST_CASE("sim embedder contract") {
    SimEmbedBackend embedder(64);
    SUBCASE("deterministic") {
        EmbeddingVector a = embedder.embed("abc");
        EmbeddingVector b = embedder.embed("abc");
        CHECK(a.values == b.values);
        CHECK(a.dim() == 64);
    }
    SUBCASE("unit norm") {
        for (const char* text : {"abc", "a longer text with many tokens", "x"}) {
            CHECK(std::abs(l2_norm(embedder.embed(text)) - 1.0) <= 1e-9);
        }
    }
    SUBCASE("one-token difference lowers cosine below 1") {
        // Reference hash oracle: recompute both embeddings with an
        // independent implementation of the token feature hash.
        auto reference = [](std::string_view text) {
            std::vector<double> v(64, 0.0);
            std::string cur;
            auto flush = [&]() {
                if (cur.empty()) return;
                uint64_t h = 0xcbf29ce484222325ull;
                for (unsigned char ch : cur) {
                    h ^= ch;
                    h *= 0x100000001b3ull;
                }
                v[h % 64] += ((h >> 32) & 1) ? 1.0 : -1.0;
                cur.clear();
            };
            for (char ch : text) {
                if (std::isalnum(static_cast<unsigned char>(ch)))
                    cur.push_back(static_cast<char>(std::tolower(ch)));
                else
                    flush();
            }
            flush();
            double n = 0;
            for (double x : v) n += x * x;
            n = std::sqrt(n);
            for (double& x : v) x /= n;
            return v;
        };
        std::string t1 = "study the blue teapot on the table";
        std::string t2 = "study the blue kettle on the table";
        auto r1 = reference(t1), r2 = reference(t2);
        double expected = 0;
        for (size_t i = 0; i < r1.size(); ++i) expected += r1[i] * r2[i];

        double got = cosine(embedder.embed(t1), embedder.embed(t2));
        CHECK(got == doctest::Approx(expected).epsilon(1e-12));
        CHECK(got < 1.0);
    }
    SUBCASE("label markers add a correlated axis component") {
        EmbeddingVector safe = embedder.embed("fixture text label=safe tail");
        EmbeddingVector uns = embedder.embed("fixture text label=unsafe tail");
        CHECK(safe[0] < 0);
        CHECK(uns[0] > 0);
    }
}

TEST_CASE("http chat backend retry and error behavior") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::atomic<int> mode{0};  // 0: always 500; 1: 500 then ok; 2: malformed; 3: ok
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int h = ++hits;
        int m = mode.load();
        if (m == 0 || (m == 1 && h < 2)) {
            res.status = 500;
            res.set_content("{}", "application/json");
            return;
        }
        if (m == 2) {
            res.set_content("{\"choices\":[]}", "application/json");
            return;
        }
        res.set_content(
            "{\"choices\":[{\"message\":{\"role\":\"assistant\",\"content\":\"hello\"}}]}",
            "application/json");
    });
    server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"data\":[{\"embedding\":[0.1,0.2,0.3]}]}", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    BackendConfig config;
    config.kind = BackendKind::http;
    config.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    config.max_retries = 2;
    config.backoff_base_ms = 10;
    std::vector<ChatTurn> turns{{TurnRole::user, "hi", ""}};

    SUBCASE("status 500 three times with maxRetries=2 exhausts into transport-error") {
        mode = 0;
        hits = 0;
        HttpChatBackend backend(config);
        CHECK_THROWS_AS(backend.chat(turns, 0.7), TransportError);
        CHECK(hits.load() == 3);  // 1 attempt + 2 retries
    }
    SUBCASE("transient 500 then success") {
        mode = 1;
        hits = 0;
        HttpChatBackend backend(config);
        CHECK(backend.chat(turns, 0.7) == "hello");
        CHECK(hits.load() == 2);
    }
    SUBCASE("2xx without a message body is malformed-response") {
        mode = 2;
        hits = 0;
        HttpChatBackend backend(config);
        CHECK_THROWS_AS(backend.chat(turns, 0.7), MalformedResponseError);
    }
    SUBCASE("embedding dimensionality mismatch") {
        HttpEmbedBackend ok(config, 3);
        CHECK(ok.embed("abc").dim() == 3);
        HttpEmbedBackend bad(config, 64);
        CHECK_THROWS_AS(bad.embed("abc"), DimMismatchError);
    }

    server.stop();
    th.join();
}

TEST_CASE("scripted backend replays and then repeats its last reply") {
    ScriptedChatBackend backend({"one", "two"});
    std::vector<ChatTurn> turns{{TurnRole::user, "x", ""}};
    CHECK(backend.chat(turns, 0) == "one");
    CHECK(backend.chat(turns, 0) == "two");
    CHECK(backend.chat(turns, 0) == "two");
    CHECK(backend.requests.size() == 3);
}
