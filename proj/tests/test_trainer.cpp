#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "relgan/trainer.hpp"

using namespace relgan;
using Catch::Approx;

namespace {

TrainConfig tiny_config(const std::string& loss) {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.seed = 1;
    cfg.batch_size = 16;
    cfg.g_hidden = {8};
    cfg.d_hidden = {8};
    cfg.iterations = 4;
    cfg.metric_interval = 2;
    cfg.metric_samples = 128;
    cfg.sample_dump = 32;
    cfg.spectral_norm_d = false;
    cfg.batch_norm_g = false;
    return cfg;
}

std::string strip_wall_ms(const std::string& path) {
    std::ifstream f(path);
    std::ostringstream out;
    std::string line;
    while (std::getline(f, line)) {
        const auto last_comma = line.rfind(',');
        out << line.substr(0, last_comma) << '\n';
    }
    return out.str();
}

}  // namespace

TEST_CASE("loop accounting", "[trainer]") {
    SECTION("n_D = 1 and one iteration apply each optimizer exactly once") {
        auto cfg = tiny_config("RaSGAN");
        cfg.iterations = 1;
        cfg.metric_interval = 1;
        auto res = train_ragan(cfg);
        REQUIRE(res.d_steps == 1);
        REQUIRE(res.g_steps == 1);
    }

    SECTION("n_D = 5 runs five discriminator steps per generator step") {
        auto cfg = tiny_config("RSGAN");
        cfg.n_d = 5;
        cfg.iterations = 3;
        auto res = train_rgan(cfg);
        REQUIRE(res.d_steps == 15);
        REQUIRE(res.g_steps == 3);
    }

    SECTION("zero learning rate leaves parameters bit-identical to init") {
        auto cfg = tiny_config("SGAN");
        cfg.lr = 0.0;
        cfg.iterations = 5;
        auto res = train_standard(cfg);
        Network ref = make_mlp(cfg.latent_dim, cfg.g_hidden, 2, Activation::relu, Activation::identity);
        init_params(ref, cfg.seed);
        for (std::size_t l = 0; l < ref.layers.size(); ++l) {
            REQUIRE(res.gen.layers[l].weight == ref.layers[l].weight);
            REQUIRE(res.gen.layers[l].bias == ref.layers[l].bias);
        }
    }

    SECTION("one metric record per interval, iterations strictly increasing") {
        auto cfg = tiny_config("RaSGAN");
        cfg.iterations = 6;
        cfg.metric_interval = 2;
        auto res = train(cfg);
        REQUIRE(res.log.records.size() == 3);
        for (std::size_t i = 0; i < res.log.records.size(); ++i) {
            REQUIRE(res.log.records[i].iter == static_cast<long>(2 * (i + 1)));
            if (i) REQUIRE(res.log.records[i].iter > res.log.records[i - 1].iter);
        }
    }
}

TEST_CASE("family preconditions", "[trainer]") {
    REQUIRE_THROWS_AS(train_rgan(tiny_config("RaSGAN")), ConfigError);
    REQUIRE_THROWS_AS(train_ragan(tiny_config("SGAN")), ConfigError);
    REQUIRE_THROWS_AS(train_standard(tiny_config("RSGAN")), ConfigError);
    auto bad = tiny_config("RaSGAN");
    bad.loss = "NotALoss";
    REQUIRE_THROWS_AS(train(bad), ConfigError);
}

TEST_CASE("config validation", "[trainer]") {
    auto cfg = tiny_config("RaSGAN");
    SECTION("n_d must be positive") {
        cfg.n_d = 0;
        REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("pack must divide the batch") {
        cfg.pack = 3;
        REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    }
    SECTION("batch size of at least 2") {
        cfg.batch_size = 1;
        REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("phase sampling discipline", "[trainer]") {
    // Re-run one outer iteration by hand with the library pieces, drawing
    // fresh batches exactly where the algorithm statements do. Identical
    // final parameters prove the trainer redraws between the D and G phases
    // and consumes RNG streams in the stated order.
    auto cfg = tiny_config("RaSGAN");
    cfg.n_d = 2;
    cfg.iterations = 1;
    cfg.metric_interval = 10;  // no metric draw
    auto res = train_ragan(cfg);

    const int m = cfg.batch_size;
    auto spec = MixtureSpec::by_name(cfg.dataset);
    LatentPrior prior{cfg.latent_dim};
    Rng data_rng(cfg.seed, 1), latent_rng(cfg.seed, 2);
    Network gen = make_mlp(cfg.latent_dim, cfg.g_hidden, 2, Activation::relu, Activation::identity);
    Network critic = make_mlp(2, cfg.d_hidden, 1, Activation::leaky_relu, Activation::identity, 0.2);
    init_params(gen, cfg.seed);
    init_params(critic, cfg.seed ^ 0xD15EA5EULL);
    const AdamConfig acfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
    Adam ag(acfg, gen.parameters()), ad(acfg, critic.parameters());
    auto nl = named_loss(cfg.loss);

    for (int dstep = 0; dstep < cfg.n_d; ++dstep) {
        auto xr = sample_real(spec, m, data_rng);
        auto z = sample_latent(prior, m, latent_rng);
        Tape t;
        BoundNetwork bg(t, gen, false, NetMode::train);
        BoundNetwork bd(t, critic, true, NetMode::train);
        auto cr = t.reshape(bd.forward(t.leaf(xr, false)), Shape{m});
        auto cf = t.reshape(bd.forward(bg.forward(t.leaf(z, false))), Shape{m});
        auto ld = nl.d_loss(t, cr, cf);
        auto leaves = bd.param_leaves();
        auto gm = t.backward(ld, std::span<const Tensor>(leaves));
        std::vector<std::vector<double>> gs;
        for (const auto& lf : leaves) gs.push_back(gm.at(lf).to_vector());
        ad.step(critic.parameters(), gs);
    }
    {
        auto xr = sample_real(spec, m, data_rng);  // fresh draw for the G phase
        auto z = sample_latent(prior, m, latent_rng);
        Tape t;
        BoundNetwork bg(t, gen, true, NetMode::train);
        BoundNetwork bd(t, critic, false, NetMode::train);
        auto cr = t.reshape(bd.forward(t.leaf(xr, false)), Shape{m});
        auto cf = t.reshape(bd.forward(bg.forward(t.leaf(z, false))), Shape{m});
        auto lg = nl.g_loss(t, cr, cf);
        auto leaves = bg.param_leaves();
        auto gm = t.backward(lg, std::span<const Tensor>(leaves));
        std::vector<std::vector<double>> gs;
        for (const auto& lf : leaves) gs.push_back(gm.at(lf).to_vector());
        ag.step(gen.parameters(), gs);
    }

    for (std::size_t l = 0; l < gen.layers.size(); ++l) {
        REQUIRE(res.gen.layers[l].weight == gen.layers[l].weight);
        REQUIRE(res.gen.layers[l].bias == gen.layers[l].bias);
    }
    for (std::size_t l = 0; l < critic.layers.size(); ++l)
        REQUIRE(res.critic.layers[l].weight == critic.layers[l].weight);
}

TEST_CASE("generator gradient flows through the mean critic of fakes", "[trainer]") {
    // Keep only the real-data term f2(C(x_r) - mean C(x_f)): its gradient
    // w.r.t. generator parameters is nonzero because the fake mean depends
    // on them.
    Network gen = make_mlp(4, {8}, 2, Activation::tanh);
    Network critic = make_mlp(2, {8}, 1, Activation::tanh);
    init_params(gen, 2);
    init_params(critic, 3);
    Rng rng(4);
    auto z = sample_latent(LatentPrior{4}, 8, rng);
    auto xr = sample_real(MixtureSpec::ring8(), 8, rng);
    auto nl = named_loss("RaSGAN");

    Tape t;
    BoundNetwork bg(t, gen, true, NetMode::train);
    BoundNetwork bd(t, critic, false, NetMode::train);
    auto cr = t.reshape(bd.forward(t.leaf(xr, false)), Shape{8});
    auto cf = t.reshape(bd.forward(bg.forward(t.leaf(z, false))), Shape{8});
    auto real_term = t.mean(nl.spec.f2.apply(t, t.sub(cr, t.expand_scalar(t.mean(cf), cr.shape()))));
    auto leaves = bg.param_leaves();
    auto gm = t.backward(real_term, std::span<const Tensor>(leaves));
    double norm = 0;
    for (const auto& lf : leaves)
        for (double v : gm.at(lf).to_vector()) norm += v * v;
    REQUIRE(std::sqrt(norm) > 1e-8);
}

TEST_CASE("NaN abort retains the last good checkpoint", "[trainer]") {
    auto cfg = tiny_config("RaLSGAN");
    cfg.lr = 1e155;  // first Adam step catapults the parameters; squares overflow
    cfg.iterations = 4;
    cfg.metric_interval = 1;
    const auto dir = (std::filesystem::temp_directory_path() / "relgan_abort_test").string();
    std::filesystem::remove_all(dir);
    cfg.out_dir = dir;
    auto res = train(cfg);
    REQUIRE(res.log.aborted);
    REQUIRE(res.log.abort_iter >= 1);
    REQUIRE(std::filesystem::exists(dir + "/checkpoint_last_good.txt"));
    auto entries = load_checkpoint(dir + "/checkpoint_last_good.txt");
    REQUIRE_FALSE(entries.empty());
    REQUIRE(std::filesystem::exists(dir + "/runlog.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("full-run determinism", "[trainer]") {
    auto cfg = tiny_config("RSGAN-GP");  // exercise the gradient-penalty path too
    cfg.iterations = 6;
    cfg.metric_interval = 3;
    const auto dir1 = (std::filesystem::temp_directory_path() / "relgan_det1").string();
    const auto dir2 = (std::filesystem::temp_directory_path() / "relgan_det2").string();
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
    cfg.out_dir = dir1;
    auto r1 = train(cfg);
    cfg.out_dir = dir2;
    auto r2 = train(cfg);

    SECTION("runlog rows are identical apart from wall time") {
        REQUIRE(strip_wall_ms(dir1 + "/runlog.csv") == strip_wall_ms(dir2 + "/runlog.csv"));
    }

    SECTION("final parameters and checkpoints are byte-identical") {
        for (std::size_t l = 0; l < r1.gen.layers.size(); ++l)
            REQUIRE(r1.gen.layers[l].weight == r2.gen.layers[l].weight);
        std::ifstream a(dir1 + "/checkpoint_final.txt"), b(dir2 + "/checkpoint_final.txt");
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        REQUIRE(sa.str() == sb.str());
    }

    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("output files", "[trainer]") {
    auto cfg = tiny_config("RaSGAN");
    cfg.iterations = 4;
    cfg.metric_interval = 2;
    const auto dir = (std::filesystem::temp_directory_path() / "relgan_files_test").string();
    std::filesystem::remove_all(dir);
    cfg.out_dir = dir;
    train(cfg);
    REQUIRE(std::filesystem::exists(dir + "/runlog.csv"));
    REQUIRE(std::filesystem::exists(dir + "/real_samples.csv"));
    REQUIRE(std::filesystem::exists(dir + "/samples_2.csv"));
    REQUIRE(std::filesystem::exists(dir + "/samples_4.csv"));
    REQUIRE(std::filesystem::exists(dir + "/checkpoint_final.txt"));
    REQUIRE(std::filesystem::exists(dir + "/checkpoint_best.txt"));

    std::ifstream f(dir + "/runlog.csv");
    std::string header;
    std::getline(f, header);
    REQUIRE(header == "iter,loss_d,loss_g,mean_c_real,mean_c_fake,jsd,modes,hq_frac,frechet,wall_ms");

    auto samples = load_samples_csv(dir + "/samples_2.csv");
    REQUIRE(samples.dim(0) == cfg.sample_dump);
    REQUIRE(samples.dim(1) == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("packing flows through training", "[trainer]") {
    auto cfg = tiny_config("RaSGAN");
    cfg.pack = 2;
    cfg.iterations = 2;
    auto res = train(cfg);
    REQUIRE(res.critic.input_dim() == 4);  // 2 features x pack 2
    REQUIRE_FALSE(res.log.aborted);
}
