#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "gradcheck.hpp"
#include "via/losses.hpp"
#include "via/skeleton.hpp"
#include "via/synthetic.hpp"

using via::LossConfig;
using via::ModelConfig;
using via::ModelParams;
using via::PairState;
using via::Tape;
using via::Tensor;
using via::Var;

namespace {

Tensor<double> random_tensor(via::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    via::Rng rng(seed);
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Two root-centered toy sequences from the synthetic generator.
std::pair<Tensor<double>, Tensor<double>> toy_pair(std::uint64_t seed) {
    via::SyntheticDataset ds = via::generate_dataset({2, 2, 16, 3, 2, seed});
    return {via::root_center(ds.at(0, 0).frames).cast<double>(),
            via::root_center(ds.at(1, 1).frames).cast<double>()};
}

}  // namespace

TEST_CASE("self reconstruction loss", "[losses]") {
    Tape<double> t;
    PairState<double> st;
    const Tensor<double> p_d = random_tensor({2, 2, 2}, 3);
    const Tensor<double> p_s = random_tensor({2, 2, 2}, 4);
    st.p_driving = t.input(p_d);
    st.p_source = t.input(p_s);

    SECTION("perfect reconstruction gives zero") {
        st.self_recon_driving = t.input(p_d);
        st.self_recon_source = t.input(p_s);
        REQUIRE(t.value(via::loss_self(t, st)).item() == 0.0);
    }
    SECTION("off by +1 at every entry gives 1 under the entry-mean convention") {
        Tensor<double> off_d = p_d, off_s = p_s;
        for (auto& v : off_d.data) v += 1.0;
        for (auto& v : off_s.data) v += 1.0;
        st.self_recon_driving = t.input(off_d);
        st.self_recon_source = t.input(off_s);
        REQUIRE(std::abs(t.value(via::loss_self(t, st)).item() - 1.0) < 1e-12);
    }
    SECTION("random toy equals the hand-computed mean of squared residuals") {
        const Tensor<double> r_d = random_tensor({2, 2, 2}, 5);
        const Tensor<double> r_s = random_tensor({2, 2, 2}, 6);
        st.self_recon_driving = t.input(r_d);
        st.self_recon_source = t.input(r_s);
        double want = 0.0;
        for (std::size_t i = 0; i < p_d.size(); ++i) {
            const double a = r_d.data[i] - p_d.data[i];
            const double b = r_s.data[i] - p_s.data[i];
            want += (a * a + b * b) / static_cast<double>(p_d.size()) / 2.0;
        }
        REQUIRE(std::abs(t.value(via::loss_self(t, st)).item() - want) < 1e-12);
    }
}

TEST_CASE("cycle reconstruction loss", "[losses]") {
    SECTION("fixed point: when generated sequences equal the originals, cycle equals self") {
        Tape<double> t;
        PairState<double> st;
        const Tensor<double> p_d = random_tensor({2, 2, 2}, 7);
        const Tensor<double> p_s = random_tensor({2, 2, 2}, 8);
        const Tensor<double> r_d = random_tensor({2, 2, 2}, 9);
        const Tensor<double> r_s = random_tensor({2, 2, 2}, 10);
        st.p_driving = t.input(p_d);
        st.p_source = t.input(p_s);
        st.self_recon_driving = t.input(r_d);
        st.self_recon_source = t.input(r_s);
        st.cycle_recon_driving = t.input(r_d);
        st.cycle_recon_source = t.input(r_s);
        REQUIRE(t.value(via::loss_cycle(t, st)).item() == t.value(via::loss_self(t, st)).item());
    }
    SECTION("zero encoder and decoder reduce cycle loss to the mean squared input") {
        const ModelConfig cfg = ModelConfig::toy();
        auto model = ModelParams<double>::init(cfg, 11);
        model.visit([](const std::string& name, Tensor<double>& p) {
            if (name.rfind("lmd/", 0) != 0)  // keep the basis orthogonal and nonzero
                for (auto& v : p.data) v = 0.0;
        });
        auto [p_d, p_s] = toy_pair(12);
        Tape<double> t;
        auto vars = via::register_model(t, model, via::TrainableGroups::pretrain());
        auto st = via::pair_forward(t, cfg, vars, t.input(p_d), t.input(p_s), LossConfig::L2());
        double want = 0.0;
        for (double v : p_d.data) want += v * v / static_cast<double>(p_d.size()) / 2.0;
        for (double v : p_s.data) want += v * v / static_cast<double>(p_s.size()) / 2.0;
        REQUIRE(std::abs(t.value(via::loss_cycle(t, st)).item() - want) < 1e-12);
    }
    SECTION("gradient of the cycle loss w.r.t. the basis matches finite differences") {
        const ModelConfig cfg = ModelConfig::toy();
        auto model = ModelParams<double>::init(cfg, 13);
        auto [p_d, p_s] = toy_pair(14);
        auto run = [&](Tensor<double>* grad_out) {
            Tape<double> t;
            auto vars = via::register_model(t, model, via::TrainableGroups::pretrain());
            auto st = via::pair_forward(t, cfg, vars, t.input(p_d), t.input(p_s), LossConfig::L2());
            Var loss = via::loss_cycle(t, st);
            if (grad_out) {
                t.backward(loss);
                *grad_out = t.grad(vars.basis);
            }
            return t.value(loss).item();
        };
        Tensor<double> basis_grad;
        run(&basis_grad);
        auto res = viatest::gradcheck({{"lmd/basis", &model.basis}}, [&] { return run(nullptr); },
                                      [&](const std::string&) -> const Tensor<double>& { return basis_grad; },
                                      1e-6);
        INFO("worst " << res.worst << " rel " << res.max_rel_err);
        REQUIRE(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("triplet losses on prescribed distances", "[losses]") {
    Tape<double> t;
    PairState<double> st;
    const Tensor<double> zero22 = Tensor<double>::zeros({2, 2});

    SECTION("anchor at the positive, negative at distance 3: zero loss") {
        st.hat_swap_driving.motion = t.input(zero22);
        st.dec_driving.motion = t.input(zero22);
        st.dec_source.motion = t.input(Tensor<double>({2, 2}, {3, 0, 0, 0}));
        REQUIRE(t.value(via::loss_triplet_motion(t, st, 1.0)).item() == 0.0);
    }
    SECTION("equidistant positive and negative: loss equals the margin") {
        st.hat_swap_driving.motion = t.input(zero22);
        st.dec_driving.motion = t.input(Tensor<double>({2, 2}, {1, 0, 0, 0}));
        st.dec_source.motion = t.input(Tensor<double>({2, 2}, {0, 1, 0, 0}));
        REQUIRE(t.value(via::loss_triplet_motion(t, st, 1.0)).item() == 1.0);
    }
    SECTION("positive at 2, negative at 0: hinge(2-0+1) = 3") {
        st.hat_swap_driving.motion = t.input(zero22);
        st.dec_driving.motion = t.input(Tensor<double>({2, 2}, {2, 0, 0, 0}));
        st.dec_source.motion = t.input(zero22);
        REQUIRE(t.value(via::loss_triplet_motion(t, st, 1.0)).item() == 3.0);
    }
    SECTION("character triplet uses Euclidean distances the same way") {
        st.hat_swap_source.character = t.input(Tensor<double>({3}, {0, 0, 0}));
        st.dec_driving.character = t.input(Tensor<double>({3}, {2, 0, 0}));
        st.dec_source.character = t.input(Tensor<double>({3}, {0, 0, 0}));
        REQUIRE(t.value(via::loss_triplet_character(t, st, 1.0)).item() == 3.0);
    }
}

TEST_CASE("velocity loss", "[losses]") {
    Tape<double> t;
    PairState<double> st;

    SECTION("exact reconstruction gives zero") {
        const Tensor<double> p = random_tensor({4, 2, 2}, 15);
        st.p_driving = t.input(p);
        st.cycle_recon_driving = t.input(p);
        REQUIRE(t.value(via::loss_velocity(t, st, 1.0)).item() == 0.0);
    }
    SECTION("single 1D joint, frames (0,1,3) vs (0,2,3): loss is 2 lambda") {
        st.p_driving = t.input(Tensor<double>({3, 1, 1}, {0, 1, 3}));
        st.cycle_recon_driving = t.input(Tensor<double>({3, 1, 1}, {0, 2, 3}));
        REQUIRE(t.value(via::loss_velocity(t, st, 1.0)).item() == 2.0);
        REQUIRE(t.value(via::loss_velocity(t, st, 0.25)).item() == 0.5);
    }
    SECTION("a constant offset between reconstruction and target cancels") {
        const Tensor<double> p = random_tensor({5, 3, 2}, 16);
        Tensor<double> shifted = p;
        for (auto& v : shifted.data) v += 0.37;
        st.p_driving = t.input(p);
        st.cycle_recon_driving = t.input(shifted);
        REQUIRE(std::abs(t.value(via::loss_velocity(t, st, 1.0)).item()) < 1e-12);
    }
    SECTION("T < 2 rejected") {
        st.p_driving = t.input(random_tensor({1, 2, 2}, 17));
        st.cycle_recon_driving = t.input(random_tensor({1, 2, 2}, 18));
        REQUIRE_THROWS_AS(via::loss_velocity(t, st, 1.0), std::invalid_argument);
    }
}

TEST_CASE("total loss composition", "[losses]") {
    const ModelConfig cfg = ModelConfig::toy();
    auto model = ModelParams<double>::init(cfg, 19);
    auto [p_d, p_s] = toy_pair(20);

    auto terms_under = [&](const LossConfig& lc) {
        Tape<double> t;
        auto vars = via::register_model(t, model, via::TrainableGroups::pretrain());
        std::vector<PairState<double>> states;
        states.push_back(via::pair_forward(t, cfg, vars, t.input(p_d), t.input(p_s), lc));
        auto terms = via::batch_losses(t, states, lc);
        return std::map<std::string, double>{{"self", t.value(terms.self).item()},
                                             {"cycle", t.value(terms.cycle).item()},
                                             {"trip_m", t.value(terms.trip_m).item()},
                                             {"trip_c", t.value(terms.trip_c).item()},
                                             {"vel", t.value(terms.vel).item()},
                                             {"total", t.value(terms.total).item()}};
    };

    SECTION("total equals the sum of enabled components") {
        const auto full = terms_under(LossConfig::L4());
        REQUIRE(std::abs(full.at("total") - (full.at("self") + full.at("cycle") + full.at("trip_m") +
                                             full.at("trip_c") + full.at("vel"))) < 1e-12);
        for (const auto& [k, v] : full)
            if (k != "total") REQUIRE(v >= 0.0);
    }
    SECTION("toggling velocity off removes exactly the velocity value") {
        const auto full = terms_under(LossConfig::L4());
        LossConfig no_vel = LossConfig::L4();
        no_vel.velocity_on = false;
        const auto rest = terms_under(no_vel);
        REQUIRE(std::abs((full.at("total") - full.at("vel")) - rest.at("total")) < 1e-12);
    }
    SECTION("the self-only configuration reduces to the self loss alone") {
        const auto l1 = terms_under(LossConfig::L1());
        REQUIRE(l1.at("total") == l1.at("self"));
        REQUIRE(l1.at("cycle") == 0.0);
        REQUIRE(l1.at("vel") == 0.0);
    }
    SECTION("disabling every term is rejected") {
        const LossConfig none{false, false, false, false};
        REQUIRE_THROWS_AS(none.validate(), std::invalid_argument);
    }
    SECTION("invalid hyperparameters rejected") {
        LossConfig bad;
        bad.margin = 0.0;
        REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
        LossConfig bad2;
        bad2.velocity_weight = -0.1;
        REQUIRE_THROWS_AS(bad2.validate(), std::invalid_argument);
    }
}
