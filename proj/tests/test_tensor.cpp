#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "cdepth/tensor.hpp"
#include "helpers.hpp"

using namespace cdepth;

TEST_CASE("elementwise add") {
    Tape tape;
    auto a = from_data({2}, {1.0f, 2.0f});
    auto b = from_data({2}, {3.0f, 4.0f});
    auto c = add(tape, a, b);
    CHECK(c->data[0] == doctest::Approx(4.0f));
    CHECK(c->data[1] == doctest::Approx(6.0f));
}

TEST_CASE("mul backward gives d(x^2)/dx = 2x") {
    Tape tape;
    auto x = from_data({1}, {3.0f}, true);
    auto y = mul(tape, x, x);
    tape.backward(y);
    CHECK(x->grad[0] == doctest::Approx(6.0f));
}

TEST_CASE("sub of a tensor from itself is zero with zero gradient") {
    Tape tape;
    auto t = from_data({3}, {1.0f, -2.0f, 5.0f}, true);
    auto d = sub(tape, t, t);
    for (float v : d->data) CHECK(v == 0.0f);
    auto loss = reduce(tape, Reduce::sum, d);
    tape.backward(loss);
    for (float g : t->grad) CHECK(g == 0.0f);
}

TEST_CASE("single-element broadcast on either side") {
    Tape tape;
    auto a = from_data({3}, {1.0f, 2.0f, 3.0f});
    auto s = scalar(2.0f);
    auto left = mul(tape, s, a);
    auto right = mul(tape, a, s);
    for (int i = 0; i < 3; ++i) {
        CHECK(left->data[i] == doctest::Approx(2.0f * a->data[i]));
        CHECK(right->data[i] == doctest::Approx(2.0f * a->data[i]));
    }
    CHECK_THROWS(add(tape, from_data({2}, {1, 2}), from_data({3}, {1, 2, 3})));
}

TEST_CASE("conv2d identity kernel reproduces the input") {
    Tape tape;
    auto x = from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto k = from_data({1, 1, 1, 1}, {1.0f});
    auto y = conv2d(tape, x, k, nullptr, 1, 0);
    REQUIRE(y->shape == std::vector<int>{1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) CHECK(y->data[i] == doctest::Approx(x->data[i]));
}

TEST_CASE("conv2d all-ones 3x3 sums to 9") {
    Tape tape;
    auto x = constant({1, 1, 3, 3}, 1.0f);
    auto k = constant({1, 1, 3, 3}, 1.0f);
    auto y = conv2d(tape, x, k, nullptr, 1, 0);
    REQUIRE(y->data.size() == 1);
    CHECK(y->data[0] == doctest::Approx(9.0f));
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tape tape;
    auto x = constant({1, 2, 4, 4}, 1.0f);
    auto k = constant({1, 3, 3, 3}, 1.0f);
    CHECK_THROWS(conv2d(tape, x, k, nullptr, 1, 1));
}

TEST_CASE("conv2d kernel gradient matches finite differences") {
    std::mt19937 rng(11);
    auto x = make_tensor({1, 2, 5, 5});
    auto k = make_tensor({3, 2, 3, 3}, true);
    auto b = make_tensor({3}, true);
    testutil::fill_uniform(x, rng, -1.0f, 1.0f);
    testutil::fill_uniform(k, rng, -0.5f, 0.5f);
    testutil::fill_uniform(b, rng, -0.5f, 0.5f);
    auto loss_fn = [&](Tape& t) {
        return reduce(t, Reduce::mean, conv2d(t, x, k, b, 1, 1));
    };
    CHECK(testutil::fd_max_rel_error({k, b}, loss_fn, 1e-3f, 1e-3f) < 1e-3);
}

TEST_CASE("activation anchor values and derivatives") {
    Tape tape;
    auto zero = from_data({1}, {0.0f}, true);
    CHECK(activation(tape, Act::sigmoid, zero)->data[0] == doctest::Approx(0.5f));

    tape.clear();
    auto neg = from_data({1}, {-1.0f}, true);
    auto r = activation(tape, Act::relu, neg);
    CHECK(r->data[0] == 0.0f);
    tape.backward(r);
    CHECK(neg->grad[0] == 0.0f);

    tape.clear();
    auto z2 = from_data({1}, {0.0f}, true);
    auto e = activation(tape, Act::elu, z2);
    CHECK(e->data[0] == doctest::Approx(0.0f));
    tape.backward(e);
    CHECK(z2->grad[0] == doctest::Approx(1.0f));
}

TEST_CASE("bilinear resize convention on the 1x2 example") {
    Tape tape;
    auto x = from_data({1, 1, 1, 2}, {0.0f, 2.0f});
    auto y = resize_bilinear(tape, x, 1, 4);
    const float expect[] = {0.0f, 0.5f, 1.5f, 2.0f};
    for (int i = 0; i < 4; ++i) CHECK(y->data[i] == doctest::Approx(expect[i]));
}

TEST_CASE("resize to identical size and resize of constants") {
    Tape tape;
    std::mt19937 rng(5);
    auto x = make_tensor({1, 2, 4, 6});
    testutil::fill_uniform(x, rng, 0.0f, 1.0f);
    auto same = resize_bilinear(tape, x, 4, 6);
    for (std::size_t i = 0; i < x->data.size(); ++i)
        CHECK(same->data[i] == doctest::Approx(x->data[i]));

    auto c = constant({1, 1, 3, 3}, 0.7f);
    auto up = resize_bilinear(tape, c, 6, 6);
    for (float v : up->data) CHECK(v == doctest::Approx(0.7f));
}

TEST_CASE("reductions and their backward") {
    Tape tape;
    auto x = from_data({3}, {1.0f, 2.0f, 3.0f}, true);
    auto m = reduce(tape, Reduce::mean, x);
    CHECK(m->data[0] == doctest::Approx(2.0f));

    tape.clear();
    auto y = from_data({4}, {1, 2, 3, 4}, true);
    auto s = reduce(tape, Reduce::sum, y);
    tape.backward(s);
    for (float g : y->grad) CHECK(g == doctest::Approx(1.0f));

    tape.clear();
    y->zero_grad();
    auto m4 = reduce(tape, Reduce::mean, y);
    tape.backward(m4);
    for (float g : y->grad) CHECK(g == doctest::Approx(0.25f));
}

TEST_CASE("mean(w*x) gradient is x/N; unused parameter has no gradient") {
    Tape tape;
    auto w = from_data({4}, {0.1f, 0.2f, 0.3f, 0.4f}, true);
    auto x = from_data({4}, {1.0f, -2.0f, 3.0f, -4.0f});
    auto loss = reduce(tape, Reduce::mean, mul(tape, w, x));
    tape.backward(loss);
    for (int i = 0; i < 4; ++i) CHECK(w->grad[i] == doctest::Approx(x->data[i] / 4.0f));

    tape.clear();
    auto unused = make_tensor({2}, true);
    auto loss2 = reduce(tape, Reduce::mean, x);
    tape.backward(loss2);
    CHECK(!unused->has_grad());
}

TEST_CASE("composite conv -> elu -> mean matches finite differences") {
    std::mt19937 rng(23);
    auto x = make_tensor({1, 2, 6, 6});
    auto k = make_tensor({2, 2, 3, 3}, true);
    auto b = make_tensor({2}, true);
    testutil::fill_uniform(x, rng, -1.0f, 1.0f);
    testutil::fill_uniform(k, rng, -0.5f, 0.5f);
    testutil::fill_uniform(b, rng, -0.2f, 0.2f);
    auto loss_fn = [&](Tape& t) {
        auto y = activation(t, Act::elu, conv2d(t, x, k, b, 1, 1));
        return reduce(t, Reduce::mean, y);
    };
    CHECK(testutil::fd_max_rel_error({k, b}, loss_fn, 1e-3f, 1e-3f) < 1e-3);
}

TEST_CASE("finite-difference oracle across ops, 50 random instances each") {
    struct Case {
        const char* name;
        std::function<TensorPtr(Tape&, const TensorPtr&, const TensorPtr&)> build;
    };
    std::vector<Case> cases = {
        {"add", [](Tape& t, const TensorPtr& a, const TensorPtr& b) { return add(t, a, b); }},
        {"sub", [](Tape& t, const TensorPtr& a, const TensorPtr& b) { return sub(t, a, b); }},
        {"mul", [](Tape& t, const TensorPtr& a, const TensorPtr& b) { return mul(t, a, b); }},
        {"div", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             return divide(t, a, add_scalar(t, mul(t, b, b), 1.0f));
         }},
        {"elu", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             return activation(t, Act::elu, mul(t, a, b));
         }},
        {"sigmoid", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             return activation(t, Act::sigmoid, add(t, a, b));
         }},
        {"softplus", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             return activation(t, Act::softplus, sub(t, a, b));
         }},
        {"abs_pos", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             // offset keeps every element away from the |.| kink
             return abs_value(t, add_scalar(t, mul(t, a, b), 2.0f));
         }},
        {"abs_neg", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             return abs_value(t, add_scalar(t, mul(t, a, b), -2.0f));
         }},
        {"exp", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             return exp_value(t, mul_scalar(t, mul(t, a, b), 0.5f));
         }},
        {"resize", [](Tape& t, const TensorPtr& a, const TensorPtr& b) {
             auto img = reshape(t, mul(t, a, b), {1, 1, 2, 4});
             return resize_bilinear(t, img, 4, 8);
         }},
    };
    std::mt19937 rng(77);
    for (const auto& c : cases) {
        for (int trial = 0; trial < 50; ++trial) {
            auto a = make_tensor({8}, true);
            auto b = make_tensor({8});
            testutil::fill_uniform(a, rng, -1.0f, 1.0f);
            testutil::fill_uniform(b, rng, 0.2f, 1.2f);
            auto loss_fn = [&](Tape& t) { return reduce(t, Reduce::mean, c.build(t, a, b)); };
            double err = testutil::fd_max_rel_error({a}, loss_fn, 1e-3f, 1e-3f);
            INFO(c.name << " trial " << trial);
            CHECK(err < 1e-3);
        }
    }
}

TEST_CASE("adam first step moves by roughly lr for any nonzero gradient") {
    ParamSet params;
    auto w = from_data({1}, {1.0f}, true);
    params.add("w", w);
    AdamState st;
    st.lr = 1e-4f;
    adam_init(st, params);
    w->ensure_grad();
    w->grad[0] = 0.5f;
    adam_step(params, st);
    // m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps)
    CHECK(w->data[0] == doctest::Approx(1.0f - 1e-4f).epsilon(1e-3));
    CHECK(st.step_count == 1);
    CHECK(!w->has_grad());  // cleared after the step
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    ParamSet params;
    auto w = from_data({2}, {0.3f, -0.7f}, true);
    params.add("w", w);
    AdamState st;
    adam_init(st, params);
    w->ensure_grad();
    adam_step(params, st);
    CHECK(w->data[0] == 0.3f);
    CHECK(w->data[1] == -0.7f);
}

TEST_CASE("adam two constant-gradient steps match the closed form") {
    const float g = 0.25f, lr = 1e-3f, b1 = 0.9f, b2 = 0.99f, eps = 1e-8f;
    ParamSet params;
    auto w = from_data({1}, {0.0f}, true);
    params.add("w", w);
    AdamState st;
    st.lr = lr;
    adam_init(st, params);

    double theta = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
        w->ensure_grad();
        w->grad[0] = g;
        adam_step(params, st);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        double mh = m / (1.0 - std::pow(b1, t));
        double vh = v / (1.0 - std::pow(b2, t));
        theta -= lr * mh / (std::sqrt(vh) + eps);
    }
    CHECK(st.step_count == 2);
    CHECK(w->data[0] == doctest::Approx(theta).epsilon(1e-5));
}

TEST_CASE("adam throws naming the parameter whose gradient is missing") {
    ParamSet params;
    auto w = from_data({1}, {1.0f}, true);
    params.add("disp.enc0.weight", w);
    AdamState st;
    adam_init(st, params);
    CHECK_THROWS_WITH_AS(adam_step(params, st),
                         doctest::Contains("disp.enc0.weight"), std::runtime_error);
}

TEST_CASE("checkpoint round-trip is bit-exact including optimizer state") {
    std::mt19937 rng(31);
    ParamSet params;
    auto a = make_tensor({2, 3}, true);
    auto b = make_tensor({4}, true);
    testutil::fill_uniform(a, rng, -1.0f, 1.0f);
    testutil::fill_uniform(b, rng, -1.0f, 1.0f);
    params.add("a", a);
    params.add("b", b);
    AdamState st;
    adam_init(st, params);
    for (int i = 0; i < 3; ++i) {
        a->ensure_grad();
        b->ensure_grad();
        testutil::fill_uniform(a, rng, -1.0f, 1.0f);
        for (auto& g : a->grad) g = 0.1f;
        for (auto& g : b->grad) g = -0.2f;
        adam_step(params, st);
    }

    auto path = (std::filesystem::temp_directory_path() / "ckpt_roundtrip.bin").string();
    save_checkpoint(path, params, &st);

    ParamSet loaded;
    auto a2 = make_tensor({2, 3}, true);
    auto b2 = make_tensor({4}, true);
    loaded.add("a", a2);
    loaded.add("b", b2);
    AdamState st2;
    adam_init(st2, loaded);
    load_checkpoint(path, loaded, &st2);

    CHECK(a2->data == a->data);
    CHECK(b2->data == b->data);
    CHECK(st2.step_count == st.step_count);
    CHECK(st2.m == st.m);
    CHECK(st2.v == st.v);
    std::filesystem::remove(path);
}

TEST_CASE("identical graphs produce identical gradients across runs") {
    auto run = [] {
        std::mt19937 rng(99);
        auto x = make_tensor({1, 1, 4, 4});
        auto k = make_tensor({1, 1, 3, 3}, true);
        testutil::fill_uniform(x, rng, -1.0f, 1.0f);
        testutil::fill_uniform(k, rng, -1.0f, 1.0f);
        Tape tape;
        auto loss = reduce(tape, Reduce::mean, conv2d(tape, x, k, nullptr, 1, 1));
        tape.backward(loss);
        return k->grad;
    };
    CHECK(run() == run());
}
