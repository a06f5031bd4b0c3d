#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "oracles.hpp"
#include "zsad/container.hpp"
#include "zsad/errors.hpp"
#include "zsad/mock_backbone.hpp"
#include "zsad/prompts.hpp"

using namespace zsad;

TEST_CASE("cartesian product cardinality and ordering") {
    StateLexicon lex;
    lex.normal_states = {"flawless {}", "perfect {}"};
    lex.abnormal_states = {"damaged {}", "broken {}"};
    const std::vector<std::string> templates = {"a photo of a {}", "a close-up of a {}"};

    const auto set = compose_fixed_prompts("capsule", templates, lex);
    REQUIRE(set.normal_prompts.size() == 4);
    REQUIRE(set.abnormal_prompts.size() == 4);
    // Templates outer, states inner.
    CHECK(set.normal_prompts[0] == "a photo of a flawless capsule");
    CHECK(set.normal_prompts[1] == "a photo of a perfect capsule");
    CHECK(set.normal_prompts[2] == "a close-up of a flawless capsule");
    CHECK(set.abnormal_prompts[0] == "a photo of a damaged capsule");

    // Two separate calls produce the same order.
    const auto again = compose_fixed_prompts("capsule", templates, lex);
    CHECK(again.normal_prompts == set.normal_prompts);
    CHECK(again.abnormal_prompts == set.abnormal_prompts);
}

TEST_CASE("the template example from the generic lexicon") {
    const auto set = compose_fixed_prompts("capsule", {"a cropped photo of a {}"},
                                           generic_lexicon());
    CHECK(std::find(set.normal_prompts.begin(), set.normal_prompts.end(),
                    "a cropped photo of a flawless capsule") != set.normal_prompts.end());
}

TEST_CASE("medical lexicon carries 10 normal and 8 abnormal states") {
    const auto lex = medical_lexicon();
    CHECK(lex.normal_states.size() == 10);
    CHECK(lex.abnormal_states.size() == 8);
    const auto set = compose_fixed_prompts("organ", medical_templates(), lex);
    CHECK(medical_templates().size() == 2);
    CHECK(set.normal_prompts.size() == 20);
    CHECK(set.abnormal_prompts.size() == 16);
}

TEST_CASE("missing or doubled slots are rejected with the offending string") {
    StateLexicon lex = generic_lexicon();
    try {
        compose_fixed_prompts("x", {"a photo without slot"}, lex);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("a photo without slot") != std::string::npos);
    }
    lex.normal_states.push_back("{} weird {}");
    CHECK_THROWS_AS(compose_fixed_prompts("x", {"a photo of a {}"}, lex), FormatError);
}

TEST_CASE("overlapping subsets are rejected") {
    StateLexicon lex;
    lex.normal_states = {"plain {}"};
    lex.abnormal_states = {"plain {}"};  // collides with the normal subset
    CHECK_THROWS_AS(compose_fixed_prompts("x", {"a photo of a {}"}, lex), FormatError);
}

TEST_CASE("detection prototypes: single prompt, duplication, permutation invariance") {
    const BackboneConfig cfg = mock_config();
    MockBackbone enc(cfg);

    FixedPromptSet single;
    single.class_name = "object";
    single.normal_prompts = {"a flawless object"};
    single.abnormal_prompts = {"a damaged object"};
    const auto protos = build_detection_prototypes(single, enc);
    const auto direct = enc.encode_text("a flawless object");
    for (std::size_t c = 0; c < protos.normal.size(); ++c) {
        CHECK(protos.normal[c] == doctest::Approx(direct.vector[c]).epsilon(1e-12));
    }
    CHECK(protos.source == PrototypeSource::fixed);
    CHECK(l2_norm(protos.normal) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(l2_norm(protos.abnormal) == doctest::Approx(1.0).epsilon(1e-6));

    // Duplicating the whole subset leaves the mean unchanged.
    FixedPromptSet doubled = single;
    doubled.normal_prompts = {"a flawless object", "a flawless object"};
    const auto protos2 = build_detection_prototypes(doubled, enc);
    for (std::size_t c = 0; c < protos.normal.size(); ++c) {
        CHECK(protos2.normal[c] == doctest::Approx(protos.normal[c]).epsilon(1e-12));
    }

    // Permutation within a subset.
    const auto full = compose_fixed_prompts("object", generic_templates(), generic_lexicon());
    FixedPromptSet shuffled = full;
    std::reverse(shuffled.normal_prompts.begin(), shuffled.normal_prompts.end());
    std::reverse(shuffled.abnormal_prompts.begin(), shuffled.abnormal_prompts.end());
    const auto pa = build_detection_prototypes(full, enc);
    const auto pb = build_detection_prototypes(shuffled, enc);
    for (std::size_t c = 0; c < pa.normal.size(); ++c) {
        CHECK(pa.normal[c] == doctest::Approx(pb.normal[c]).epsilon(1e-9));
        CHECK(pa.abnormal[c] == doctest::Approx(pb.abnormal[c]).epsilon(1e-9));
    }

    // Distinct state words yield distinct prototypes under the mock.
    CHECK(dot(pa.normal, pa.abnormal) < 1.0 - 1e-9);
}

TEST_CASE("learnable prompt init: reproducible, correct shapes, seed-sensitive") {
    const auto a = init_learnable_prompts(8, 64, 111);
    const auto b = init_learnable_prompts(8, 64, 111);
    CHECK(a.tokens_normal == b.tokens_normal);      // bitwise
    CHECK(a.tokens_abnormal == b.tokens_abnormal);  // bitwise
    CHECK(a.tokens_normal.rows == 8);
    CHECK(a.tokens_normal.cols == 64);
    CHECK(a.tokens_abnormal.rows == 8);

    const auto c = init_learnable_prompts(8, 64, 112);
    CHECK(a.tokens_normal != c.tokens_normal);

    // Spread roughly matches the 0.02 draw scale.
    double maxabs = 0.0;
    for (double v : a.tokens_normal.data) maxabs = std::max(maxabs, std::abs(v));
    CHECK(maxabs < 0.2);
    CHECK(maxabs > 0.001);

    CHECK_THROWS_AS(init_learnable_prompts(0, 64, 1), ParamError);
    CHECK_THROWS_AS(init_learnable_prompts(8, 0, 1), ParamError);
}

TEST_CASE("localization prototypes follow the composition rule") {
    const BackboneConfig cfg = mock_config();
    MockBackbone enc(cfg);
    auto state = init_learnable_prompts(8, cfg.text_token_dim, 111);

    // Zero tokens: the normal sequence reduces to zero rows plus "object".
    for (double& v : state.tokens_normal.data) v = 0.0;
    const auto protos = build_localization_prototypes(state, enc);
    TokenEmbeddingSequence manual;
    manual.tokens = Matrix(9, static_cast<std::size_t>(cfg.text_token_dim), 0.0);
    const Matrix object_row = enc.lookup_word_embedding("object");
    for (std::size_t c = 0; c < object_row.cols; ++c) manual.tokens.at(8, c) = object_row.at(0, c);
    manual.provenance.assign(9, TokenProvenance::learned);
    manual.provenance[8] = TokenProvenance::word_lookup;
    const auto manual_embed = enc.encode_token_sequence(manual);
    CHECK(protos.normal == manual_embed.vector);  // bitwise: same pipeline
    CHECK(protos.source == PrototypeSource::learnable);

    // The abnormal sequence splices "damaged" and "object": length E + 2.
    const auto seq_a = abnormal_prompt_sequence(state, enc);
    CHECK(seq_a.length() == 10);
    CHECK(seq_a.provenance[7] == TokenProvenance::learned);
    CHECK(seq_a.provenance[8] == TokenProvenance::word_lookup);

    // Determinism across calls.
    const auto protos2 = build_localization_prototypes(state, enc);
    CHECK(protos.normal == protos2.normal);
    CHECK(protos.abnormal == protos2.abnormal);

    // Touching only the abnormal tokens leaves the normal prototype bitwise fixed.
    auto moved = state;
    for (double& v : moved.tokens_abnormal.data) v += 0.01;
    const auto protos3 = build_localization_prototypes(moved, enc);
    CHECK(protos3.normal == protos.normal);
    CHECK(protos3.abnormal != protos.abnormal);
}

TEST_CASE("checkpoint round-trip is stable at float32 precision") {
    oracle::TempDir tmp("checkpoint");
    auto state = init_learnable_prompts(8, 32, 111);
    state.trained_on = "synthetic-train";

    const auto path = tmp.path / "prompts.zspc";
    save_checkpoint(state, path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.token_count == 8);
    CHECK(loaded.seed == 111);
    CHECK(loaded.trained_on == "synthetic-train");
    CHECK(loaded.version == 1);
    for (std::size_t i = 0; i < state.tokens_normal.data.size(); ++i) {
        CHECK(loaded.tokens_normal.data[i] ==
              static_cast<double>(static_cast<float>(state.tokens_normal.data[i])));
    }

    // Save -> load -> save is byte-stable.
    const auto path2 = tmp.path / "prompts2.zspc";
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint loader rejects mismatches") {
    oracle::TempDir tmp("checkpoint_bad");
    const auto state = init_learnable_prompts(4, 16, 7);

    // Wrong version.
    {
        nlohmann::ordered_json meta;
        meta["version"] = 2;
        meta["token_count"] = 4;
        meta["text_token_dim"] = 16;
        meta["seed"] = 7;
        const char magic[4] = {'Z', 'S', 'P', 'C'};
        container::write_file(tmp.path / "v2.zspc", magic, meta,
                              {container::from_matrix("tokens_normal", state.tokens_normal),
                               container::from_matrix("tokens_abnormal", state.tokens_abnormal)});
        CHECK_THROWS_AS(load_checkpoint(tmp.path / "v2.zspc"), FormatError);
    }
    // Shape disagrees with header.
    {
        nlohmann::ordered_json meta;
        meta["version"] = 1;
        meta["token_count"] = 6;  // header says 6, tensors carry 4
        meta["text_token_dim"] = 16;
        meta["seed"] = 7;
        const char magic[4] = {'Z', 'S', 'P', 'C'};
        container::write_file(tmp.path / "shape.zspc", magic, meta,
                              {container::from_matrix("tokens_normal", state.tokens_normal),
                               container::from_matrix("tokens_abnormal", state.tokens_abnormal)});
        CHECK_THROWS_AS(load_checkpoint(tmp.path / "shape.zspc"), FormatError);
    }
    // Wrong magic.
    {
        std::ofstream out(tmp.path / "junk.zspc", std::ios::binary);
        out << "JUNKxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "junk.zspc"), FormatError);
    // Missing file is an asset error.
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "absent.zspc"), AssetError);
}

TEST_CASE("medical lexicon selection changes only the fixed prototypes") {
    const BackboneConfig cfg = mock_config();
    MockBackbone enc(cfg);
    const auto state = init_learnable_prompts(8, cfg.text_token_dim, 111);

    const auto learnable = build_localization_prototypes(state, enc);
    const auto fixed_generic = build_detection_prototypes(
        compose_fixed_prompts("organ", generic_templates(), generic_lexicon()), enc);
    const auto fixed_medical = build_detection_prototypes(
        compose_fixed_prompts("organ", medical_templates(), medical_lexicon()), enc);

    CHECK(fixed_generic.normal != fixed_medical.normal);
    // The learnable path never reads the lexicon; rebuilt prototypes match bitwise.
    const auto learnable_again = build_localization_prototypes(state, enc);
    CHECK(learnable.normal == learnable_again.normal);
    CHECK(learnable.abnormal == learnable_again.abnormal);
}
