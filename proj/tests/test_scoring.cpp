#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "zsad/errors.hpp"
#include "zsad/heatmap.hpp"
#include "zsad/metrics.hpp"
#include "zsad/mock_backbone.hpp"
#include "zsad/scoring.hpp"

using namespace zsad;

namespace {

TextPrototypes unit_prototypes(Vec n, Vec a) {
    TextPrototypes p;
    p.normal = l2_normalize(n);
    p.abnormal = l2_normalize(a);
    return p;
}

// Realistic prototype pairs sit close together in embedding space; the
// resulting similarity gaps stay within what float64 can order at tau=0.0042.
TextPrototypes random_close_prototypes(Rng& rng, std::size_t d, double spread = 0.1) {
    Vec base(d), delta(d);
    for (double& v : base) v = rng.normal();
    for (double& v : delta) v = rng.normal();
    base = l2_normalize(base);
    delta = l2_normalize(delta);
    Vec other(d);
    for (std::size_t i = 0; i < d; ++i) other[i] = base[i] + spread * delta[i];
    return unit_prototypes(base, other);
}

Vec random_unit(Rng& rng, std::size_t d) {
    Vec v(d);
    for (double& x : v) x = rng.normal();
    return l2_normalize(v);
}

Image random_image(Rng& rng, const BackboneConfig& cfg) {
    Image img(static_cast<std::size_t>(cfg.channels()),
              static_cast<std::size_t>(cfg.input_resolution),
              static_cast<std::size_t>(cfg.input_resolution));
    for (double& v : img.data) v = rng.uniform(-1.0, 1.0);
    return img;
}

} // namespace

TEST_CASE("equal similarities split the likelihood evenly") {
    auto p = unit_prototypes({1, 0, 0, 0}, {0, 1, 0, 0});
    const Vec e = l2_normalize({1, 1, 0, 0});  // same dot with both prototypes
    const auto r = class_likelihood(e, p, 0.0042);
    CHECK(r.abnormal == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.normal == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("similarity gap of exactly tau gives logistic(1)") {
    const double tau = 0.07;
    TextPrototypes p;
    p.normal = {0.0, 1.0, 0.0, 0.0};
    p.abnormal = {tau, 0.0, std::sqrt(1.0 - tau * tau), 0.0};
    const Vec e = {1.0, 0.0, 0.0, 0.0};
    const auto r = class_likelihood(e, p, tau);
    CHECK(r.abnormal == doctest::Approx(oracle::logistic(1.0)).epsilon(1e-12));
    CHECK(r.abnormal == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("cosine gap 0.1 saturates at tau 0.0042") {
    TextPrototypes p;
    p.normal = {0.0, 1.0, 0.0, 0.0};
    p.abnormal = {0.1, std::sqrt(1.0 - 0.01), 0.0, 0.0};
    const Vec e = {1.0, 0.0, 0.0, 0.0};
    const auto r = class_likelihood(e, p, 0.0042);
    CHECK(r.abnormal > 1.0 - 1e-10);
    CHECK(r.abnormal == doctest::Approx(oracle::logistic(0.1 / 0.0042)).epsilon(1e-12));
}

TEST_CASE("likelihoods sum to one within 1e-12 over 1000 random triples") {
    Rng rng(31);
    for (int i = 0; i < 1000; ++i) {
        auto p = random_close_prototypes(rng, 16);
        const Vec e = random_unit(rng, 16);
        const double tau = rng.uniform(0.001, 1.0);
        const auto r = class_likelihood(e, p, tau);
        CHECK(std::abs(r.normal + r.abnormal - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax pair is invariant to logit shifts within 1e-12") {
    Rng rng(32);
    for (int i = 0; i < 1000; ++i) {
        const double ln = rng.uniform(-300.0, 300.0);
        const double la = rng.uniform(-300.0, 300.0);
        const double shift = rng.uniform(-200.0, 200.0);
        const auto a = softmax_pair(ln, la);
        const auto b = softmax_pair(ln + shift, la + shift);
        CHECK(std::abs(a.abnormal - b.abnormal) <= 1e-12);
        CHECK(std::abs(a.normal - b.normal) <= 1e-12);
    }
}

TEST_CASE("abnormal likelihood is strictly increasing in the abnormal similarity") {
    const double tau = 0.05;
    double prev = -1.0;
    for (double s = -0.4; s <= 0.4; s += 0.01) {
        const auto r = softmax_pair(0.1 / tau, s / tau);
        CHECK(r.abnormal > prev);
        prev = r.abnormal;
    }
}

TEST_CASE("temperature changes are monotone: AUROC identical across tau") {
    Rng rng(33);
    ScoredSet tiny, mid, unit;
    for (int i = 0; i < 1000; ++i) {
        auto p = random_close_prototypes(rng, 16);
        const Vec e = random_unit(rng, 16);
        const int label = rng.uniform() < 0.5 ? 1 : 0;
        tiny.scores.push_back(class_likelihood(e, p, 0.0042).abnormal);
        mid.scores.push_back(class_likelihood(e, p, 0.01).abnormal);
        unit.scores.push_back(class_likelihood(e, p, 1.0).abnormal);
        tiny.labels.push_back(label);
        mid.labels.push_back(label);
        unit.labels.push_back(label);
    }
    const double a = auroc(tiny).value;
    const double b = auroc(mid).value;
    const double c = auroc(unit).value;
    CHECK(a == b);
    CHECK(b == c);
}

TEST_CASE("class_likelihood validates its inputs") {
    auto p = unit_prototypes({1, 0}, {0, 1});
    CHECK_THROWS_AS(class_likelihood({1.0, 0.0}, p, 0.0), ParamError);
    CHECK_THROWS_AS(class_likelihood({1.0, 0.0}, p, -1.0), ParamError);
    CHECK_THROWS_AS(
        class_likelihood({std::numeric_limits<double>::quiet_NaN(), 0.0}, p, 0.1),
        InputError);
    CHECK_THROWS_AS(class_likelihood({1.0, 0.0, 0.0}, p, 0.1), InputError);
}

TEST_CASE("patch maps: constant features give constant maps, shapes follow the grid") {
    VisualFeatures f;
    f.grid_h = 3;
    f.grid_w = 4;
    f.patch_features = Matrix(12, 8);
    Rng rng(5);
    Vec row(8);
    for (double& v : row) v = rng.normal();
    for (std::size_t r = 0; r < 12; ++r) {
        for (std::size_t c = 0; c < 8; ++c) f.patch_features.at(r, c) = row[c];
    }
    auto p = random_close_prototypes(rng, 8);
    auto [mn, ma] = patch_anomaly_maps(f, p, 0.05);
    CHECK(mn.values.rows == 3);
    CHECK(mn.values.cols == 4);
    for (double v : ma.values.data) CHECK(v == doctest::Approx(ma.values.data[0]));
    for (std::size_t i = 0; i < ma.values.data.size(); ++i) {
        CHECK(mn.values.data[i] + ma.values.data[i] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("37x37 grid comes out of the reference-resolution config") {
    BackboneConfig cfg = mock_config();
    cfg.patch_size = 14;
    cfg.input_resolution = 518;
    cfg.embed_dim = 16;
    cfg.text_token_dim = 8;
    MockBackbone enc(cfg);
    Rng rng(9);
    const Image img = random_image(rng, cfg);
    const auto f = enc.encode_image(img);
    CHECK(f.grid_h == 37);
    CHECK(f.grid_w == 37);
    CHECK(f.patch_count() == 1369);
    auto p = random_close_prototypes(rng, 16);
    auto [mn, ma] = patch_anomaly_maps(f, p, 0.0042);
    CHECK(ma.values.rows == 37);
    CHECK(ma.values.cols == 37);
    (void)mn;
}

TEST_CASE("swapping prototypes swaps the two maps exactly") {
    Rng rng(6);
    VisualFeatures f;
    f.grid_h = 2;
    f.grid_w = 2;
    f.patch_features = Matrix(4, 8);
    for (double& v : f.patch_features.data) v = rng.normal();
    auto p = random_close_prototypes(rng, 8);
    TextPrototypes swapped;
    swapped.normal = p.abnormal;
    swapped.abnormal = p.normal;
    auto [mn1, ma1] = patch_anomaly_maps(f, p, 0.01);
    auto [mn2, ma2] = patch_anomaly_maps(f, swapped, 0.01);
    CHECK(mn1.values.data == ma2.values.data);
    CHECK(ma1.values.data == mn2.values.data);
}

TEST_CASE("bilinear upsample: constants, monotone rows, max bound") {
    Matrix constant(3, 3, 0.7);
    const Matrix up = upsample_bilinear(constant, 9, 11);
    for (double v : up.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    Matrix two(2, 2);
    two.at(0, 0) = 0.0;
    two.at(0, 1) = 1.0;
    two.at(1, 0) = 0.0;
    two.at(1, 1) = 1.0;
    const Matrix wide = upsample_bilinear(two, 2, 4);
    for (std::size_t r = 0; r < wide.rows; ++r) {
        for (std::size_t c = 1; c < wide.cols; ++c) {
            CHECK(wide.at(r, c) >= wide.at(r, c - 1) - 1e-12);
        }
    }

    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
        Matrix src(2 + rng.index(6), 2 + rng.index(6));
        double lo = 1e9, hi = -1e9;
        for (double& v : src.data) {
            v = rng.uniform();
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const Matrix out = upsample_bilinear(src, src.rows + rng.index(20), src.cols + rng.index(20));
        for (double v : out.data) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("bilinear upsample rejects downsampling") {
    Matrix src(4, 4, 0.5);
    CHECK_THROWS_AS(upsample_bilinear(src, 3, 8), ParamError);
    CHECK_THROWS_AS(upsample_bilinear(src, 8, 3), ParamError);
}

TEST_CASE("upsample adjoint agrees with the forward operator (matrix transpose check)") {
    // <A x, y> == <x, A^T y> for random x, y.
    Rng rng(8);
    Matrix x(3, 4);
    for (double& v : x.data) v = rng.normal();
    Matrix y(7, 9);
    for (double& v : y.data) v = rng.normal();
    const Matrix ax = upsample_bilinear(x, 7, 9);
    const Matrix aty = upsample_bilinear_adjoint(y, 3, 4);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ax.data.size(); ++i) lhs += ax.data[i] * y.data[i];
    for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * aty.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("gaussian smoothing: constants, impulse peak, mass preservation") {
    Matrix constant(6, 6, 0.4);
    const Matrix same = gaussian_smooth(constant, 2.0);
    for (double v : same.data) CHECK(v == doctest::Approx(0.4).epsilon(1e-9));

    Matrix impulse(21, 21, 0.0);
    impulse.at(10, 10) = 1.0;
    const Matrix blurred = gaussian_smooth(impulse, 1.5);
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < blurred.data.size(); ++i) {
        if (blurred.data[i] > best) {
            best = blurred.data[i];
            best_idx = i;
        }
    }
    CHECK(best_idx == 10 * 21 + 10);

    // Interior-supported input: total mass survives the reflect padding.
    Matrix interior(31, 31, 0.0);
    interior.at(15, 15) = 0.8;
    interior.at(14, 16) = 0.3;
    const Matrix sm = gaussian_smooth(interior, 2.0);
    double before = 0.0, after = 0.0;
    for (double v : interior.data) before += v;
    for (double v : sm.data) after += v;
    CHECK(after == doctest::Approx(before).epsilon(1e-6));

    CHECK_THROWS_AS(gaussian_smooth(constant, 0.0), ParamError);
    CHECK_THROWS_AS(gaussian_smooth(constant, -2.0), ParamError);
}

TEST_CASE("pipeline keeps values in [0,1] through upsample and smoothing") {
    Rng rng(10);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix src(5, 5);
        for (double& v : src.data) v = rng.uniform();
        AnomalyMap map{src, MapStage::patch_grid};
        const AnomalyMap up = upsample_bilinear(map, 40, 40);
        for (double v : up.values.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const AnomalyMap sm = gaussian_smooth(up, 3.0);
        CHECK(sm.stage == MapStage::smoothed);
        for (double v : sm.values.data) {
            CHECK(v >= -1e-9);
            CHECK(v <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("image score strategies: S5 additive example and S1=S2 degeneracy") {
    // Geometry engineered so p_a(spatial token) = 0.3 at tau = 1.
    const double gap = std::log(0.3 / 0.7);
    VisualFeatures f;
    f.grid_h = 1;
    f.grid_w = 1;
    f.patch_features = Matrix(1, 4, 0.0);
    f.spatial_token = {1.0, 0.0, 0.0, 0.0};
    f.object_token = {1.0, 0.0, 0.0, 0.0};
    TextPrototypes p;
    p.normal = {0.0, 1.0, 0.0, 0.0};
    p.abnormal = {gap, 1.0, 0.0, 0.0};  // dot with e_hat = gap; shared component cancels

    AnomalyMap patch{Matrix(1, 1, 0.9), MapStage::patch_grid};
    const auto s5 = image_score(f, p, 1.0, Strategy::S5, &patch);
    CHECK(s5.global_term == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s5.local_term == doctest::Approx(0.9));
    CHECK(s5.value == doctest::Approx(1.2).epsilon(1e-12));

    // Identical global tokens make S1 = S2 = S3 = S4.
    const auto s1 = image_score(f, p, 1.0, Strategy::S1);
    const auto s2 = image_score(f, p, 1.0, Strategy::S2);
    const auto s3 = image_score(f, p, 1.0, Strategy::S3);
    const auto s4 = image_score(f, p, 1.0, Strategy::S4);
    CHECK(s1.value == s2.value);
    CHECK(s3.value == s1.value);
    CHECK(s4.value == s1.value);
    for (const auto& s : {s1, s2, s3, s4}) {
        CHECK(s.value >= 0.0);
        CHECK(s.value <= 1.0);
    }

    CHECK_THROWS_AS(image_score(f, p, 1.0, Strategy::S5, nullptr), ParamError);
    AnomalyMap wrong_stage{Matrix(1, 1, 0.9), MapStage::smoothed};
    CHECK_THROWS_AS(image_score(f, p, 1.0, Strategy::S5, &wrong_stage), ParamError);
}

TEST_CASE("strategies S1-S4 are bitwise blind to the learnable prompt state") {
    const BackboneConfig cfg = mock_config();
    MockBackbone enc(cfg);
    const auto fixed = build_detection_prototypes(
        compose_fixed_prompts("object", generic_templates(), generic_lexicon()), enc);

    Rng rng(77);
    for (int rep = 0; rep < 10; ++rep) {
        const Image img = random_image(rng, cfg);
        const auto f = enc.encode_image(img);

        // Two unrelated prompt states; S1-S4 must not see them at all.
        auto state_a = init_learnable_prompts(8, cfg.text_token_dim, rng.next_u64());
        auto state_b = init_learnable_prompts(8, cfg.text_token_dim, rng.next_u64());
        const auto ga = build_localization_prototypes(state_a, enc);
        const auto gb = build_localization_prototypes(state_b, enc);
        auto [na, maps_a] = patch_anomaly_maps(f, ga, cfg.temperature);
        auto [nb, maps_b] = patch_anomaly_maps(f, gb, cfg.temperature);
        (void)na;
        (void)nb;

        for (auto strat : {Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4}) {
            const auto sa = image_score(f, fixed, cfg.temperature, strat, &maps_a);
            const auto sb = image_score(f, fixed, cfg.temperature, strat, &maps_b);
            CHECK(sa.value == sb.value);  // bitwise
        }
        // The local maps themselves do depend on the state.
        CHECK(maps_a.values.data != maps_b.values.data);
    }
}

TEST_CASE("decoupling: fixed prompt lists never touch the anomaly map") {
    const BackboneConfig cfg = mock_config();
    MockBackbone enc(cfg);
    Rng rng(78);
    const Image img = random_image(rng, cfg);
    const auto state = init_learnable_prompts(8, cfg.text_token_dim, 111);
    const auto learnable = build_localization_prototypes(state, enc);

    const auto fixed_a = build_detection_prototypes(
        compose_fixed_prompts("object", generic_templates(), generic_lexicon()), enc);
    StateLexicon scrambled = generic_lexicon();
    scrambled.normal_states = {"pristine {}", "{} in mint condition"};
    scrambled.abnormal_states = {"scratched {}", "{} with a dent"};
    const auto fixed_b = build_detection_prototypes(
        compose_fixed_prompts("object", {"an odd photo of a {}"}, scrambled), enc);

    const auto ra = run_inference(img, enc, fixed_a, learnable, 4.0);
    const auto rb = run_inference(img, enc, fixed_b, learnable, 4.0);
    CHECK(ra.map.values.data == rb.map.values.data);  // bitwise
    CHECK(ra.score.local_term == rb.score.local_term);
    CHECK(ra.score.global_term != rb.score.global_term);
}

TEST_CASE("heatmap exports: raw container round-trip and png bytes") {
    oracle::TempDir tmp("heatmap");
    Rng rng(11);
    AnomalyMap map{Matrix(12, 12), MapStage::smoothed};
    for (double& v : map.values.data) v = rng.uniform();

    const auto raw_path = tmp.path / "m.zsmp";
    export_heatmap_raw(map, raw_path);
    const AnomalyMap back = load_heatmap_raw(raw_path);
    CHECK(back.stage == MapStage::smoothed);
    REQUIRE(back.values.rows == 12);
    for (std::size_t i = 0; i < map.values.data.size(); ++i) {
        // Stored as float32.
        CHECK(back.values.data[i] ==
              static_cast<double>(static_cast<float>(map.values.data[i])));
    }

    const auto png_path = tmp.path / "m.png";
    export_heatmap_png(map, png_path);
    CHECK(std::filesystem::file_size(png_path) > 0);
    // Filenames derived from ids are filesystem-safe.
    CHECK(sanitize_sample_id("bottle/test/broken_large/000") == "bottle_test_broken_large_000");
}

TEST_CASE("run_inference on a constant image propagates the constant") {
    const BackboneConfig cfg = mock_config();
    MockBackbone enc(cfg);
    Image img(3, 128, 128, 0.0);
    const auto state = init_learnable_prompts(8, cfg.text_token_dim, 111);
    const auto learnable = build_localization_prototypes(state, enc);
    const auto fixed = build_detection_prototypes(
        compose_fixed_prompts("object", generic_templates(), generic_lexicon()), enc);

    const auto r = run_inference(img, enc, fixed, learnable, 4.0);
    CHECK(r.map.values.rows == 128);
    CHECK(r.map.values.cols == 128);
    CHECK(r.map.stage == MapStage::smoothed);
    const double v0 = r.patch_anomaly.values.data[0];
    for (double v : r.patch_anomaly.values.data) CHECK(v == doctest::Approx(v0));
    CHECK(r.score.local_term == doctest::Approx(v0));
    for (double v : r.map.values.data) CHECK(v == doctest::Approx(v0).epsilon(1e-9));
    // Components recombine to the reported value.
    CHECK(r.score.value == doctest::Approx(r.score.global_term + r.score.local_term));
}
