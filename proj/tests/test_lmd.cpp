#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "gradcheck.hpp"
#include "via/lmd.hpp"
#include "via/rng.hpp"

using via::Tensor;
using via::Var;
namespace lmd = via::lmd;

namespace {

Tensor<double> random_tensor(via::Shape shape, via::Rng& rng) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("decomposition on hand-checked cases", "[lmd]") {
    SECTION("axis-aligned basis picks out coordinates") {
        Tensor<double> basis({2, 3}, {1, 0, 0, 0, 1, 0});
        Tensor<double> latent({4, 3}, {3, 4, 5, 3, 4, 5, 3, 4, 5, 3, 4, 5});
        const auto d = lmd::decompose(latent, basis);
        REQUIRE(d.magnitudes.data == std::vector<double>{3, 4});
        REQUIRE(d.character.data == std::vector<double>{3, 4, 0});
        for (int t = 0; t < 4; ++t) {
            REQUIRE(d.motion.data[static_cast<std::size_t>(3 * t)] == 0);
            REQUIRE(d.motion.data[static_cast<std::size_t>(3 * t + 1)] == 0);
            REQUIRE(d.motion.data[static_cast<std::size_t>(3 * t + 2)] == 5);
        }
    }
    SECTION("non-unit basis vector uses the squared-norm denominator") {
        Tensor<double> basis({1, 2}, {2, 0});
        Tensor<double> latent({1, 2}, {3, 1});
        const auto d = lmd::decompose(latent, basis);
        REQUIRE(d.magnitudes.data[0] == 1.5);
        REQUIRE(d.character.data == std::vector<double>{3, 0});
        REQUIRE(d.motion.data == std::vector<double>{0, 1});
    }
    SECTION("latent constant in time and inside the span has zero motion") {
        via::Rng rng(3);
        Tensor<double> basis = lmd::init_basis<double>(3, 6, rng);
        std::vector<double> coef{0.5, -1.25, 2.0};
        Tensor<double> latent = Tensor<double>::zeros({5, 6});
        for (int t = 0; t < 5; ++t)
            for (int i = 0; i < 3; ++i)
                for (int c = 0; c < 6; ++c)
                    latent.data[static_cast<std::size_t>(t * 6 + c)] +=
                        coef[static_cast<std::size_t>(i)] * basis.data[static_cast<std::size_t>(i * 6 + c)];
        const auto d = lmd::decompose(latent, basis);
        for (double v : d.motion.data) REQUIRE(std::abs(v) < 1e-12);
    }
}

TEST_CASE("recombination properties", "[lmd]") {
    via::Rng rng(17);
    SECTION("decompose then recombine is the identity") {
        for (int k : {2, 8, 32}) {
            Tensor<double> basis = lmd::init_basis<double>(k, 64, rng);
            for (int rep = 0; rep < 50; ++rep) {
                Tensor<double> latent = random_tensor({8, 64}, rng);
                const auto d = lmd::decompose(latent, basis);
                const auto back = lmd::recombine(d.motion, d.character);
                for (std::size_t i = 0; i < latent.size(); ++i)
                    REQUIRE(std::abs(back.data[i] - latent.data[i]) < 1e-12);
                // temporal mean of the motion is orthogonal to every direction
                std::vector<double> mean(64, 0.0);
                for (int t = 0; t < 8; ++t)
                    for (int c = 0; c < 64; ++c) mean[static_cast<std::size_t>(c)] += d.motion.data[static_cast<std::size_t>(t * 64 + c)] / 8.0;
                for (int i = 0; i < k; ++i) {
                    double dp = 0;
                    for (int c = 0; c < 64; ++c)
                        dp += mean[static_cast<std::size_t>(c)] * basis.data[static_cast<std::size_t>(i * 64 + c)];
                    REQUIRE(std::abs(dp) < 1e-10);
                }
            }
        }
    }
    SECTION("swap keeps the source magnitudes exactly") {
        Tensor<double> basis = lmd::init_basis<double>(4, 16, rng);
        const auto da = lmd::decompose(random_tensor({6, 16}, rng), basis);
        const auto db = lmd::decompose(random_tensor({6, 16}, rng), basis);
        const auto swapped = lmd::recombine(da.motion, db.character);
        const auto d2 = lmd::decompose(swapped, basis);
        for (int i = 0; i < 4; ++i)
            REQUIRE(std::abs(d2.magnitudes.data[static_cast<std::size_t>(i)] -
                             db.magnitudes.data[static_cast<std::size_t>(i)]) < 1e-10);
    }
    SECTION("zero motion gives a latent constant in time") {
        Tensor<double> character({3}, {1.0, -2.0, 0.5});
        const auto out = lmd::recombine(Tensor<double>::zeros({4, 3}), character);
        for (int t = 0; t < 4; ++t)
            for (int c = 0; c < 3; ++c)
                REQUIRE(out.data[static_cast<std::size_t>(t * 3 + c)] == character.data[static_cast<std::size_t>(c)]);
    }
    SECTION("decompose is idempotent on its motion output") {
        Tensor<double> basis = lmd::init_basis<double>(5, 24, rng);
        const auto d = lmd::decompose(random_tensor({7, 24}, rng), basis);
        const auto d2 = lmd::decompose(lmd::recombine(d.motion, d.character), basis);
        for (std::size_t i = 0; i < d.motion.size(); ++i)
            REQUIRE(std::abs(d2.motion.data[i] - d.motion.data[i]) < 1e-10);
    }
}

TEST_CASE("reorthogonalization", "[lmd]") {
    via::Rng rng(29);
    SECTION("orthogonal basis is a fixed point") {
        Tensor<double> basis = lmd::init_basis<double>(8, 32, rng);
        Tensor<double> copy = basis;
        via::Rng r2(1);
        lmd::reorthogonalize(copy, r2);
        for (std::size_t i = 0; i < basis.size(); ++i)
            REQUIRE(std::abs(copy.data[i] - basis.data[i]) < 1e-10);
    }
    SECTION("textbook example") {
        Tensor<double> basis({2, 2}, {1, 0, 1, 1});
        via::Rng r2(1);
        lmd::reorthogonalize(basis, r2);
        REQUIRE(basis.data[0] == 1.0);
        REQUIRE(basis.data[1] == 0.0);
        REQUIRE(std::abs(basis.data[2]) < 1e-15);
        REQUIRE(std::abs(basis.data[3] - 1.0) < 1e-15);
    }
    SECTION("random 32x64 basis reaches 1e-10 residual") {
        Tensor<double> basis = Tensor<double>::zeros({32, 64});
        for (auto& v : basis.data) v = rng.normal();
        via::Rng r2(3);
        REQUIRE(lmd::reorthogonalize(basis, r2) == 0);
        REQUIRE(lmd::orthogonality_residual(basis) < 1e-10);
    }
    SECTION("rank deficiency replaces the dependent vector") {
        Tensor<double> basis({2, 4}, {1, 2, 3, 4, 2, 4, 6, 8});
        via::Rng r2(5);
        REQUIRE(lmd::reorthogonalize(basis, r2) == 1);
        REQUIRE(lmd::orthogonality_residual(basis) < 1e-10);
        REQUIRE(basis.data[0] == 1.0);  // first vector untouched
    }
    SECTION("decompose rejects a basis violating the tolerance") {
        Tensor<double> bad({2, 3}, {1, 0, 0, 0.01, 1, 0});
        REQUIRE_THROWS_AS(lmd::decompose(random_tensor({2, 3}, rng), bad), std::invalid_argument);
    }
}

TEST_CASE("latent manipulation", "[lmd]") {
    via::Rng rng(37);
    Tensor<double> basis = lmd::init_basis<double>(3, 8, rng);
    Tensor<double> latent = random_tensor({4, 8}, rng);
    const auto d = lmd::decompose(latent, basis);

    SECTION("own magnitudes reproduce the original latent") {
        const auto out = lmd::manipulate(d.motion, basis, d.magnitudes.data);
        for (std::size_t i = 0; i < latent.size(); ++i) REQUIRE(std::abs(out.data[i] - latent.data[i]) < 1e-12);
    }
    SECTION("all-zero magnitudes give the canonical-view latent: motion alone") {
        const auto out = lmd::manipulate(d.motion, basis, {0.0, 0.0, 0.0});
        REQUIRE(out.data == d.motion.data);
    }
    SECTION("sweeping one magnitude moves the latent affinely along that direction") {
        const auto at = [&](double a) { return lmd::manipulate(d.motion, basis, {a, 0.0, 0.0}); };
        const auto y0 = at(0.0), y1 = at(1.0), y2 = at(2.0);
        for (std::size_t i = 0; i < y0.size(); ++i)
            REQUIRE(std::abs((y2.data[i] - y1.data[i]) - (y1.data[i] - y0.data[i])) < 1e-12);
        for (int c = 0; c < 8; ++c)
            REQUIRE(std::abs((y1.data[static_cast<std::size_t>(c)] - y0.data[static_cast<std::size_t>(c)]) -
                             basis.data[static_cast<std::size_t>(c)]) < 1e-12);
    }
}

TEST_CASE("tape decomposition matches the plain path and passes gradcheck", "[lmd][gradcheck]") {
    via::Rng rng(41);
    Tensor<double> basis0 = lmd::init_basis<double>(3, 6, rng);
    Tensor<double> latent0 = random_tensor({5, 6}, rng);

    SECTION("values agree with the plain implementation") {
        via::Tape<double> t;
        Var latent = t.input(latent0);
        Var basis = t.param(basis0);
        const auto dv = lmd::decompose(t, latent, basis);
        const auto dp = lmd::decompose(latent0, basis0);
        REQUIRE(t.value(dv.magnitudes).data == dp.magnitudes.data);
        REQUIRE(t.value(dv.character).data == dp.character.data);
        REQUIRE(t.value(dv.motion).data == dp.motion.data);
    }
    SECTION("gradients flow through decompose and recombine") {
        std::vector<std::pair<std::string, Tensor<double>>> params = {{"basis", basis0},
                                                                      {"latent", latent0}};
        auto run = [&params](std::map<std::string, Tensor<double>>* grads) {
            via::Tape<double> t;
            Var latent = t.param(params[1].second);
            Var basis = t.param(params[0].second);
            const auto d = lmd::decompose(t, latent, basis);
            Var swapped = lmd::recombine(t, d.motion, via::scale(t, d.character, 0.5));
            Var loss = via::add(t, via::frob_norm(t, swapped), via::dot(t, d.magnitudes, d.magnitudes));
            if (grads) {
                t.backward(loss);
                (*grads)["basis"] = t.grad(basis);
                (*grads)["latent"] = t.grad(latent);
            }
            return t.value(loss).item();
        };
        std::map<std::string, Tensor<double>> grads;
        run(&grads);
        auto res = viatest::gradcheck(
            {{"basis", &params[0].second}, {"latent", &params[1].second}},
            [&] { return run(nullptr); },
            [&grads](const std::string& n) -> const Tensor<double>& { return grads.at(n); });
        INFO("worst " << res.worst << " rel " << res.max_rel_err);
        REQUIRE(res.max_rel_err < 1e-4);
    }
}
