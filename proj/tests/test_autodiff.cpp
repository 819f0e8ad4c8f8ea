#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "gradcheck.hpp"
#include "via/rng.hpp"
#include "via/tape.hpp"

using via::Shape;
using via::Tape;
using via::Tensor;
using via::Var;

namespace {

Tensor<double> random_tensor(Shape shape, via::Rng& rng, double scale = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

// Builds a named-parameter loss, checks reverse-mode against the central
// finite-difference oracle.
struct Harness {
    std::vector<std::pair<std::string, Tensor<double>>> params;
    std::function<Var(Tape<double>&, std::map<std::string, Var>&)> build;

    void add(const std::string& name, Tensor<double> t) { params.emplace_back(name, std::move(t)); }

    double run_loss(std::map<std::string, Tensor<double>>* grads_out = nullptr) {
        Tape<double> tape;
        std::map<std::string, Var> vars;
        for (auto& [name, tensor] : params) vars[name] = tape.param(tensor);
        Var loss = build(tape, vars);
        if (grads_out) {
            tape.backward(loss);
            for (auto& [name, var] : vars) (*grads_out)[name] = tape.grad(var);
        }
        return tape.value(loss).item();
    }

    viatest::GradCheckResult check() {
        std::map<std::string, Tensor<double>> grads;
        run_loss(&grads);
        std::vector<std::pair<std::string, Tensor<double>*>> ptrs;
        for (auto& [name, tensor] : params) ptrs.emplace_back(name, &tensor);
        return viatest::gradcheck(
            ptrs, [this] { return run_loss(); },
            [&grads](const std::string& name) -> const Tensor<double>& { return grads.at(name); });
    }
};

}  // namespace

TEST_CASE("forward op shape contracts", "[autodiff]") {
    via::Rng rng(11);
    Tape<double> t;

    SECTION("conv2d 1x1 expand then 9x1 keeps [64,13,*]") {
        Var x = t.input(random_tensor({64, 13, 2}, rng));
        Var w1 = t.param(random_tensor({1, 1, 2, 64}, rng, 0.1));
        Var h = via::conv2d(t, x, w1, 1);
        REQUIRE(t.value(h).shape == Shape{64, 13, 64});
        Var w2 = t.param(random_tensor({9, 1, 64, 64}, rng, 0.05));
        Var y = via::conv2d(t, h, w2, 1);
        REQUIRE(t.value(y).shape == Shape{64, 13, 64});
    }
    SECTION("conv2d temporal stride halves T") {
        Var x = t.input(random_tensor({64, 13, 4}, rng));
        Var w = t.param(random_tensor({9, 1, 4, 4}, rng));
        REQUIRE(t.value(via::conv2d(t, x, w, 2)).shape == Shape{32, 13, 4});
    }
    SECTION("upsample2 doubles time") {
        Var x = t.input(random_tensor({8, 256}, rng));
        REQUIRE(t.value(via::upsample2(t, x)).shape == Shape{16, 256});
    }
    SECTION("hinge clamps below zero") {
        REQUIRE(t.value(via::hinge(t, t.input(Tensor<double>::scalar(-0.5)))).item() == 0.0);
        REQUIRE(t.value(via::hinge(t, t.input(Tensor<double>::scalar(0.7)))).item() == 0.7);
    }
    SECTION("shape mismatch reports both shapes") {
        Var a = t.input(random_tensor({2, 3}, rng));
        Var b = t.input(random_tensor({3, 3}, rng));
        REQUIRE_THROWS_WITH(via::add(t, a, b),
                            Catch::Matchers::ContainsSubstring("[2,3]") &&
                                Catch::Matchers::ContainsSubstring("[3,3]"));
    }
    SECTION("non-scalar loss rejected") {
        Var a = t.input(random_tensor({2, 2}, rng));
        REQUIRE_THROWS_AS(t.backward(a), std::invalid_argument);
    }
}

TEST_CASE("analytic gradients of the spec cases", "[autodiff]") {
    SECTION("loss = |x|^2 at (3,4) gives grad (6,8)") {
        Tape<double> t;
        Var x = t.param(Tensor<double>({2}, {3.0, 4.0}));
        Var loss = via::dot(t, x, x);
        t.backward(loss);
        REQUIRE(t.value(loss).item() == 25.0);
        REQUIRE(t.grad(x).data == std::vector<double>{6.0, 8.0});
    }
    SECTION("hinge(a - b + 1) at a=2, b=0") {
        Tape<double> t;
        Var a = t.param(Tensor<double>::scalar(2.0));
        Var b = t.param(Tensor<double>::scalar(0.0));
        Var loss = via::hinge(t, via::add_const(t, via::sub(t, a, b), 1.0));
        t.backward(loss);
        REQUIRE(t.value(loss).item() == 3.0);
        REQUIRE(t.grad(a).data[0] == 1.0);
        REQUIRE(t.grad(b).data[0] == -1.0);
    }
    SECTION("parameter off the loss path gets exactly zero") {
        Tape<double> t;
        Var used = t.param(Tensor<double>({2}, {1.0, 2.0}));
        Var unused = t.param(Tensor<double>({3}, {5.0, 6.0, 7.0}));
        t.backward(via::dot(t, used, used));
        REQUIRE(t.grad(unused).data == std::vector<double>{0.0, 0.0, 0.0});
    }
}

TEST_CASE("finite differences agree per op", "[autodiff][gradcheck]") {
    via::Rng rng(23);
    auto expect_ok = [](Harness& h) {
        auto res = h.check();
        INFO("worst " << res.worst << " rel err " << res.max_rel_err << " over " << res.checked);
        REQUIRE(res.max_rel_err < 1e-4);
    };

    SECTION("elementwise chain add/sub/mul/div/scale/relu") {
        Harness h;
        h.add("a", random_tensor({3, 4}, rng));
        h.add("b", random_tensor({3, 4}, rng));
        h.add("c", random_tensor({3, 4}, rng, 0.5));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var d = via::add(t, v["a"], v["b"]);
            d = via::mul(t, d, v["c"]);
            Var q = via::div(t, v["a"], via::add_const(t, via::mul(t, v["b"], v["b"]), 1.0));
            d = via::sub(t, d, q);
            d = via::relu(t, via::scale(t, d, 1.7));
            return via::mean_all(t, d);
        };
        expect_ok(h);
    }
    SECTION("matmul / transpose / bias / reductions") {
        Harness h;
        h.add("a", random_tensor({4, 3}, rng));
        h.add("b", random_tensor({3, 5}, rng));
        h.add("bias", random_tensor({5}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var y = via::matmul(t, v["a"], v["b"]);
            y = via::bias_add(t, y, v["bias"]);
            Var z = via::matmul(t, via::transpose2d(t, y), v["a"]);
            Var col = via::mean_axis(t, z, 0);
            return via::add(t, via::sum_all(t, via::mul(t, col, col)), via::frob_norm(t, y));
        };
        expect_ok(h);
    }
    SECTION("conv2d with stride, joint_mix") {
        Harness h;
        h.add("x", random_tensor({8, 3, 2}, rng));
        h.add("w", random_tensor({3, 1, 2, 4}, rng));
        h.add("m", random_tensor({3, 3}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var y = via::joint_mix(t, v["x"], v["m"]);
            y = via::conv2d(t, y, v["w"], 2);
            return via::mean_all(t, via::mul(t, y, y));
        };
        expect_ok(h);
    }
    SECTION("conv2d spatial kernel 3") {
        Harness h;
        h.add("x", random_tensor({6, 5, 2}, rng));
        h.add("w", random_tensor({3, 3, 2, 3}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            return via::frob_norm(t, via::conv2d(t, v["x"], v["w"], 1));
        };
        expect_ok(h);
    }
    SECTION("conv1d, upsample2, time_diff") {
        Harness h;
        h.add("x", random_tensor({6, 3}, rng));
        h.add("w", random_tensor({5, 3, 4}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var y = via::upsample2(t, v["x"]);
            y = via::conv1d(t, y, v["w"]);
            y = via::time_diff(t, y);
            return via::mean_all(t, via::mul(t, y, y));
        };
        expect_ok(h);
    }
    SECTION("dot, norms and hinge composite") {
        Harness h;
        h.add("a", random_tensor({7}, rng));
        h.add("b", random_tensor({7}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var d1 = via::frob_norm(t, via::sub(t, v["a"], v["b"]));
            Var d2 = via::frob_norm(t, v["b"]);
            Var margin = via::add_const(t, via::sub(t, d1, d2), 1.0);
            return via::add(t, via::hinge(t, margin), via::dot(t, v["a"], v["b"]));
        };
        expect_ok(h);
    }
    SECTION("cross entropy logits") {
        Harness h;
        h.add("w", random_tensor({4, 5}, rng));
        h.add("x", random_tensor({1, 4}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var logits = via::reshape(t, via::matmul(t, v["x"], v["w"]), {5});
            return via::cross_entropy_logits(t, logits, 2);
        };
        expect_ok(h);
    }
}

TEST_CASE("small conv net end to end against finite differences", "[autodiff][gradcheck]") {
    // Two conv blocks + pooling head, ~200 parameters.
    via::Rng rng(31);
    Harness h;
    h.add("w1", random_tensor({3, 1, 2, 4}, rng, 0.5));
    h.add("m1", random_tensor({3, 3}, rng, 0.5));
    h.add("b1", random_tensor({4}, rng, 0.1));
    h.add("w2", random_tensor({3, 1, 4, 6}, rng, 0.5));
    h.add("m2", random_tensor({3, 3}, rng, 0.5));
    h.add("b2", random_tensor({6}, rng, 0.1));
    h.add("head", random_tensor({6, 3}, rng, 0.5));
    via::Rng xrng(7);
    const Tensor<double> x0 = random_tensor({8, 3, 2}, xrng);
    h.build = [x0](Tape<double>& t, std::map<std::string, Var>& v) {
        Var x = t.input(x0);
        x = via::relu(t, via::bias_add(t, via::conv2d(t, via::joint_mix(t, x, v["m1"]), v["w1"], 2), v["b1"]));
        x = via::relu(t, via::bias_add(t, via::conv2d(t, via::joint_mix(t, x, v["m2"]), v["w2"], 2), v["b2"]));
        Var pooled = via::mean_axis(t, via::mean_axis(t, x, 1), 0);
        Var logits = via::reshape(t, via::matmul(t, via::reshape(t, pooled, {1, 6}), v["head"]), {3});
        return via::cross_entropy_logits(t, logits, 1);
    };
    std::size_t n_params = 0;
    for (auto& [name, tensor] : h.params) n_params += tensor.size();
    INFO("parameter count " << n_params);
    REQUIRE(n_params >= 100);
    auto res = h.check();
    INFO("worst " << res.worst << " rel err " << res.max_rel_err);
    REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("backward is linear in the loss", "[autodiff]") {
    via::Rng rng(41);
    const Tensor<double> a0 = random_tensor({4, 4}, rng);
    const Tensor<double> b0 = random_tensor({4, 4}, rng);

    auto grads_of = [&](double ca, double cb) {
        Tape<double> t;
        Var p = t.param(a0);
        Var q = t.input(b0);
        Var f = via::mean_all(t, via::mul(t, p, q));          // linear in p
        Var g = via::dot(t, p, p);                            // quadratic in p
        Var loss = via::add(t, via::scale(t, f, ca), via::scale(t, g, cb));
        t.backward(loss);
        return t.grad(p).data;
    };

    const auto gf = grads_of(1.0, 0.0);
    const auto gg = grads_of(0.0, 1.0);
    const auto combo = grads_of(2.5, -1.25);
    for (std::size_t i = 0; i < combo.size(); ++i)
        REQUIRE(std::abs(combo[i] - (2.5 * gf[i] - 1.25 * gg[i])) < 1e-10);
}

TEST_CASE("identical seeds give bit-identical forward values", "[autodiff]") {
    auto run = [] {
        via::Rng rng(99);
        Tape<float> t;
        Var x = t.input(random_tensor({16, 5, 2}, rng).cast<float>());
        Var w = t.param(random_tensor({9, 1, 2, 8}, rng).cast<float>());
        Var y = via::conv2d(t, x, w, 2);
        return t.value(via::mean_all(t, via::mul(t, y, y))).item();
    };
    const float a = run();
    const float b = run();
    REQUIRE(std::memcmp(&a, &b, sizeof(float)) == 0);
}

TEST_CASE("frobenius normalization op", "[autodiff][gradcheck]") {
    SECTION("pins the norm and passes gradcheck") {
        via::Rng rng(51);
        Harness h;
        h.add("x", random_tensor({4, 5}, rng));
        h.build = [](Tape<double>& t, std::map<std::string, Var>& v) {
            Var y = via::normalize_frob(t, v["x"], 3.0);
            Var probe = t.input(Tensor<double>::full({4, 5}, 0.37));
            return via::dot(t, y, probe);
        };
        auto res = h.check();
        INFO("worst " << res.worst << " rel " << res.max_rel_err);
        REQUIRE(res.max_rel_err < 1e-4);

        Tape<double> t;
        Var x = t.param(random_tensor({4, 5}, rng));
        Var y = via::normalize_frob(t, x, 3.0);
        REQUIRE(t.value(via::frob_norm(t, y)).item() == Catch::Approx(3.0).epsilon(1e-12));
    }
    SECTION("zero input passes through") {
        Tape<double> t;
        Var x = t.input(Tensor<double>::zeros({3, 2}));
        for (double v : t.value(via::normalize_frob(t, x, 5.0)).data) REQUIRE(v == 0.0);
    }
}
