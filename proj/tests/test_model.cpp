#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kvw/errors.hpp"
#include "kvw/model.hpp"
#include "kvw/rng.hpp"

using namespace kvw;

namespace {

ModelConfig tiny_config(FfnVariant variant = FfnVariant::plain,
                        Activation act = Activation::relu) {
    ModelConfig c;
    c.num_layers = 2;
    c.d_model = 8;
    c.ffn_dim = 16;
    c.num_heads = 2;
    c.vocab_size = 32;
    c.max_seq_len = 8;
    c.activation = act;
    c.ffn_variant = variant;
    return c;
}

std::string temp_path(const char * name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config invariants") {
    ModelConfig c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.num_heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(c.validate(), config_error);
    c = tiny_config();
    c.num_layers = 0;
    CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("ffn_forward single firing key") {
    // d=2, m=2, plain relu; K rows pick out x's coordinates, V rows are unit
    // vectors: x=(3,0) fires only the first key at 3 and returns 3*v_1
    ModelConfig c;
    c.num_layers = 1;
    c.d_model = 2;
    c.ffn_dim = 2;
    c.num_heads = 1;
    c.vocab_size = 4;
    c.max_seq_len = 4;

    LayerWeights lw;
    lw.ffn_key = Matrix(2, 2);
    lw.ffn_key.at(0, 0) = 1.0f;
    lw.ffn_key.at(1, 1) = 1.0f;
    lw.ffn_value = Matrix(2, 2);
    lw.ffn_value.at(0, 0) = 1.0f;
    lw.ffn_value.at(1, 1) = 1.0f;

    const float x[2] = {3.0f, 0.0f};
    float y[2], coeffs[2];
    ffn_forward(x, lw, c, y, coeffs);
    CHECK(coeffs[0] == doctest::Approx(3.0));
    CHECK(coeffs[1] == doctest::Approx(0.0));
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[1] == doctest::Approx(0.0));
}

TEST_CASE("ffn_forward zero input gives zero output for zero-at-origin activations") {
    for (Activation act : {Activation::relu, Activation::silu}) {
        ModelConfig c = tiny_config(FfnVariant::plain, act);
        ModelWeights w = random_model(c, 7);
        std::vector<float> x(static_cast<size_t>(c.d_model), 0.0f);
        std::vector<float> y(static_cast<size_t>(c.d_model));
        std::vector<float> coeffs(static_cast<size_t>(c.ffn_dim));
        ffn_forward(x.data(), w.layers[0], c, y.data(), coeffs.data());
        for (float v : coeffs) CHECK(v == 0.0f);
        for (float v : y) CHECK(v == 0.0f);
    }
}

TEST_CASE("ffn_forward matches element-wise loop oracle") {
    // random d=4, m=8 weights, both variants: y == sum_i c_i v_i by loop
    for (FfnVariant variant : {FfnVariant::plain, FfnVariant::gated}) {
        ModelConfig c;
        c.num_layers = 1;
        c.d_model = 4;
        c.ffn_dim = 8;
        c.num_heads = 1;
        c.vocab_size = 8;
        c.max_seq_len = 4;
        c.activation = Activation::silu;
        c.ffn_variant = variant;
        ModelWeights w = random_model(c, 0, 0.5f);

        Rng rng(123);
        std::vector<float> x(4);
        for (float & v : x) v = static_cast<float>(rng.normal());

        std::vector<float> y(4), coeffs(8);
        ffn_forward(x.data(), w.layers[0], c, y.data(), coeffs.data());

        // oracle: reverse-order accumulation over rows
        long double acc[4] = {0, 0, 0, 0};
        for (int i = 7; i >= 0; i--) {
            for (int j = 0; j < 4; j++) {
                acc[j] += static_cast<long double>(coeffs[static_cast<size_t>(i)]) *
                          w.layers[0].ffn_value.at(static_cast<size_t>(i), static_cast<size_t>(j));
            }
        }
        for (int j = 0; j < 4; j++) {
            CHECK(std::fabs(static_cast<double>(acc[j]) - y[static_cast<size_t>(j)]) < 1e-6);
        }
    }
}

TEST_CASE("decomposition identity on random inputs, plain and gated") {
    // FFN output equals the coefficient-weighted sum of knowledge vectors
    for (FfnVariant variant : {FfnVariant::plain, FfnVariant::gated}) {
        for (Activation act : {Activation::relu, Activation::gelu, Activation::silu}) {
            ModelConfig c = tiny_config(variant, act);
            ModelWeights w = random_model(c, 11, 0.4f);
            Rng rng(99);
            for (int trial = 0; trial < 20; trial++) {
                std::vector<float> x(static_cast<size_t>(c.d_model));
                for (float & v : x) v = static_cast<float>(rng.normal());
                std::vector<float> y(x.size()), coeffs(static_cast<size_t>(c.ffn_dim));
                ffn_forward(x.data(), w.layers[1], c, y.data(), coeffs.data());

                for (size_t j = 0; j < x.size(); j++) {
                    long double ref = 0;
                    for (size_t i = 0; i < coeffs.size(); i++) {
                        ref += static_cast<long double>(coeffs[i]) * w.layers[1].ffn_value.at(i, j);
                    }
                    const double denom = std::max(1.0, std::fabs(static_cast<double>(ref)));
                    CHECK(std::fabs(static_cast<double>(ref) - y[j]) / denom < 1e-5);
                }
            }
        }
    }
}

TEST_CASE("linearity in V: scaling one row scales its contribution exactly") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 3, 0.4f);
    Rng rng(5);
    std::vector<float> x(static_cast<size_t>(c.d_model));
    for (float & v : x) v = static_cast<float>(rng.normal());

    std::vector<float> y0(x.size()), coeffs0(static_cast<size_t>(c.ffn_dim));
    ffn_forward(x.data(), w.layers[0], c, y0.data(), coeffs0.data());

    const size_t row = 5;
    const float s = 0.25f;
    std::vector<float> v_row(w.layers[0].ffn_value.row(row),
                             w.layers[0].ffn_value.row(row) + x.size());
    for (size_t j = 0; j < x.size(); j++) w.layers[0].ffn_value.at(row, j) *= s;

    std::vector<float> y1(x.size()), coeffs1(static_cast<size_t>(c.ffn_dim));
    ffn_forward(x.data(), w.layers[0], c, y1.data(), coeffs1.data());

    // coefficients do not depend on V
    for (size_t i = 0; i < coeffs0.size(); i++) CHECK(coeffs0[i] == coeffs1[i]);
    // the difference is exactly (1-s) * c_row * v_row
    for (size_t j = 0; j < x.size(); j++) {
        const double expected = static_cast<double>(coeffs0[row]) * v_row[j] * (1.0 - s);
        CHECK(y0[j] - y1[j] == doctest::Approx(expected).epsilon(1e-4));
    }
}

TEST_CASE("forward_with_trace shape and validation") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 1);

    std::vector<int32_t> one = {3};
    ForwardTrace t = forward_with_trace(w, one);
    REQUIRE(t.coeffs.size() == 2);
    CHECK(t.coeffs[0].rows == 1);
    CHECK(t.coeffs[0].cols == 16);
    CHECK(t.logits.rows == 1);
    CHECK(t.logits.cols == 32);

    std::vector<int32_t> bad = {99};
    CHECK_THROWS_AS(forward_with_trace(w, bad), input_error);
    std::vector<int32_t> negative = {-1};
    CHECK_THROWS_AS(forward_with_trace(w, negative), input_error);
    std::vector<int32_t> long_seq(static_cast<size_t>(c.max_seq_len) + 1, 1);
    CHECK_THROWS_AS(forward_with_trace(w, long_seq), input_error);
    std::vector<int32_t> empty;
    CHECK_THROWS_AS(forward_with_trace(w, empty), input_error);
}

TEST_CASE("forward is deterministic bit for bit") {
    ModelConfig c = tiny_config(FfnVariant::gated, Activation::silu);
    ModelWeights w = random_model(c, 42);
    std::vector<int32_t> tokens = {1, 2, 3, 4, 5};
    ForwardTrace a = forward_with_trace(w, tokens);
    ForwardTrace b = forward_with_trace(w, tokens);
    REQUIRE(a.logits.data.size() == b.logits.data.size());
    for (size_t i = 0; i < a.logits.data.size(); i++) {
        CHECK(a.logits.data[i] == b.logits.data[i]);
    }
    for (size_t l = 0; l < a.coeffs.size(); l++) {
        for (size_t i = 0; i < a.coeffs[l].data.size(); i++) {
            CHECK(a.coeffs[l].data[i] == b.coeffs[l].data[i]);
        }
    }
}

TEST_CASE("trace invariant: coefficients against values reproduce the ffn output") {
    ModelConfig c = tiny_config(FfnVariant::gated, Activation::gelu);
    ModelWeights w = random_model(c, 8);
    std::vector<int32_t> tokens = {0, 7, 13, 2};
    ForwardTrace t = forward_with_trace(w, tokens);
    for (size_t l = 0; l < w.layers.size(); l++) {
        for (size_t pos = 0; pos < tokens.size(); pos++) {
            for (size_t j = 0; j < static_cast<size_t>(c.d_model); j++) {
                long double ref = 0;
                for (size_t i = 0; i < static_cast<size_t>(c.ffn_dim); i++) {
                    ref += static_cast<long double>(t.coeffs[l].at(pos, i)) *
                           w.layers[l].ffn_value.at(i, j);
                }
                const double denom = std::max(1.0, std::fabs(static_cast<double>(ref)));
                CHECK(std::fabs(static_cast<double>(ref) - t.ffn_out[l].at(pos, j)) / denom < 1e-5);
            }
        }
    }
}

TEST_CASE("edit then restore reproduces logits within tolerance") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 21);
    std::vector<int32_t> tokens = {4, 9, 1};
    ForwardTrace before = forward_with_trace(w, tokens);

    const float g = 0.37f;
    for (LayerWeights & lw : w.layers) {
        for (float & v : lw.ffn_value.data) v *= g;
    }
    for (LayerWeights & lw : w.layers) {
        for (float & v : lw.ffn_value.data) v /= g;
    }
    ForwardTrace after = forward_with_trace(w, tokens);
    for (size_t i = 0; i < before.logits.data.size(); i++) {
        const double denom = std::max(1e-3, std::fabs(static_cast<double>(before.logits.data[i])));
        CHECK(std::fabs(before.logits.data[i] - after.logits.data[i]) / denom < 1e-4);
    }
}

TEST_CASE("save/load round trip is bit identical") {
    for (FfnVariant variant : {FfnVariant::plain, FfnVariant::gated}) {
        ModelConfig c = tiny_config(variant);
        ModelWeights w = random_model(c, 0);
        const std::string path = temp_path("kvw_test_model.kvwm");
        save_model(w, path);
        ModelWeights r = load_model(path);

        CHECK(r.config == w.config);
        CHECK(r.tok_embedding.data == w.tok_embedding.data);
        CHECK(r.pos_embedding.data == w.pos_embedding.data);
        for (size_t l = 0; l < w.layers.size(); l++) {
            CHECK(r.layers[l].wq.data == w.layers[l].wq.data);
            CHECK(r.layers[l].ffn_key.data == w.layers[l].ffn_key.data);
            CHECK(r.layers[l].ffn_value.data == w.layers[l].ffn_value.data);
            CHECK((r.layers[l].ffn_gate.has_value() == w.layers[l].ffn_gate.has_value()));
        }
        CHECK(r.unembedding.data == w.unembedding.data);
        std::filesystem::remove(path);
    }
}

TEST_CASE("truncated payload is a corrupt-file error") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 1);
    const std::string path = temp_path("kvw_test_trunc.kvwm");
    save_model(w, path);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 64);
    CHECK_THROWS_AS(load_model(path), input_error);
    std::filesystem::remove(path);
}

TEST_CASE("flipped payload byte fails the checksum") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 2);
    const std::string path = temp_path("kvw_test_corrupt.kvwm");
    save_model(w, path);

    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-8, std::ios::end);
    char byte = 0;
    f.read(&byte, 1);
    byte = static_cast<char>(byte ^ 0x5a);
    f.seekp(-8, std::ios::end);
    f.write(&byte, 1);
    f.close();
    CHECK_THROWS_AS(load_model(path), input_error);
    std::filesystem::remove(path);
}

TEST_CASE("header shape mismatch names the tensor") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 3);
    const std::string path = temp_path("kvw_test_shape.kvwm");
    save_model(w, path);

    // rewrite the header with a wrong shape for the unembedding
    std::ifstream in(path, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "tensor unembedding f32 32 8";
    const auto pos = contents.find(needle);
    REQUIRE(pos != std::string::npos);
    contents.replace(pos, needle.size(), "tensor unembedding f32 32 9");
    std::ofstream out(path, std::ios::binary);
    out << contents;
    out.close();

    try {
        load_model(path);
        FAIL("expected a corrupt-file error");
    } catch (const input_error & e) {
        CHECK(std::string(e.what()).find("unembedding") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("unknown activation tag rejected") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 4);
    const std::string path = temp_path("kvw_test_tag.kvwm");
    save_model(w, path);

    std::ifstream in(path, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "config activation relu";
    const auto pos = contents.find(needle);
    REQUIRE(pos != std::string::npos);
    contents.replace(pos, needle.size(), "config activation texp");
    std::ofstream out(path, std::ios::binary);
    out << contents;
    out.close();

    CHECK_THROWS_AS(load_model(path), config_error);
    std::filesystem::remove(path);
}

TEST_CASE("non-finite weights rejected") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 5);
    w.layers[0].ffn_value.at(3, 3) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(w.validate_finite(), numeric_error);
}

TEST_CASE("mac counter counts the forward pass") {
    ModelConfig c = tiny_config();
    ModelWeights w = random_model(c, 6);
    std::vector<int32_t> tokens = {1, 2, 3};
    macs::reset();
    forward_with_trace(w, tokens);
    const uint64_t first = macs::total();
    CHECK(first > 0);
    forward_with_trace(w, tokens);
    CHECK(macs::total() == 2 * first);
}
