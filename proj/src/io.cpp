#include "biphoton/io.hpp"

#include <fstream>
#include <sstream>

namespace biphoton {

namespace fs = std::filesystem;

namespace {

constexpr int kJsonVersion = 1;

// JSON has no inf/nan; non-finite values are written as null.
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double read_number(const Json& j, double if_null) { return j.is_null() ? if_null : j.get<double>(); }

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void expect_format(const Json& j, std::string_view format) {
    if (!j.is_object() || !j.contains("format") || j.at("format") != format) {
        throw DataError("expected a JSON document with format '" + std::string(format) + "'");
    }
    if (j.value("version", 0) != kJsonVersion) {
        throw DataError("unsupported " + std::string(format) + " version");
    }
}

BinStatus parse_status(const std::string& text) {
    for (auto s : {BinStatus::ok, BinStatus::negative_radicand, BinStatus::zero_gamma, BinStatus::no_counts}) {
        if (to_string(s) == text) return s;
    }
    throw DataError("unknown bin status '" + text + "'");
}

}  // namespace

void write_atomic(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path& path, const Json& doc) { write_atomic(path, doc.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Json to_json(const AnalyzerSetting& setting) { return Json{{"theta", setting.theta}, {"phi", setting.phi}}; }

AnalyzerSetting analyzer_from_json(const Json& j) {
    return {j.at("theta").get<double>(), j.at("phi").get<double>()};
}

Json to_json(const CoincidenceHistogram& hist) {
    Json j;
    j["format"] = "biphoton.histogram";
    j["version"] = kJsonVersion;
    j["units"] = {{"tau", "s"}, {"bin_width", "s"}, {"acquisition_time", "s"}, {"counts", "coincidences"},
                  {"setting", "rad"}};
    j["bin_width"] = hist.bin_width;
    j["tau_min"] = hist.tau_min;
    j["tau_max"] = hist.tau_max;
    j["acquisition_time"] = hist.acquisition_time;
    j["singles_a"] = hist.singles_a;
    j["singles_b"] = hist.singles_b;
    j["setting"] = to_json(hist.setting);
    j["counts"] = hist.counts;
    if (!hist.expected.empty()) j["expected"] = hist.expected;
    return j;
}

CoincidenceHistogram histogram_from_json(const Json& j) {
    expect_format(j, "biphoton.histogram");
    CoincidenceHistogram hist;
    try {
        hist.bin_width = j.at("bin_width").get<double>();
        hist.tau_min = j.at("tau_min").get<double>();
        hist.tau_max = j.at("tau_max").get<double>();
        hist.acquisition_time = j.at("acquisition_time").get<double>();
        hist.singles_a = j.at("singles_a").get<std::uint64_t>();
        hist.singles_b = j.at("singles_b").get<std::uint64_t>();
        hist.setting = analyzer_from_json(j.at("setting"));
        hist.counts = j.at("counts").get<std::vector<std::uint64_t>>();
        if (j.contains("expected")) hist.expected = j.at("expected").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw DataError(std::string("histogram JSON: ") + e.what());
    }
    hist.validate();
    return hist;
}

Json to_json(const ReconstructedTpwf& recon) {
    Json j;
    j["format"] = "biphoton.reconstruction";
    j["version"] = kJsonVersion;
    j["units"] = {{"tau", "s"}, {"psi", "relative (sqrt of normalized g2)"}, {"arg", "rad"}};
    j["bin_width"] = recon.bin_width;
    j["options"] = {{"background_mode", to_string(recon.options.background_mode)},
                    {"gamma_mode", to_string(recon.options.gamma_mode)},
                    {"wing_fraction", recon.options.wing_fraction},
                    {"root", recon.options.root == RootChoice::larger ? "larger" : "smaller"}};
    j["background"] = number(recon.background);
    j["sigma_background"] = number(recon.sigma_background);
    j["wing_level"] = number(recon.wing_level);
    j["pooled_gamma"] = number(recon.pooled_gamma);
    j["sigma_pooled_gamma"] = number(recon.sigma_pooled_gamma);
    j["valid_bins"] = recon.valid_count();
    Json bins = Json::array();
    for (const auto& b : recon.bins) {
        bins.push_back({{"tau", b.tau},
                        {"y", {number(b.y[0]), number(b.y[1]), number(b.y[2])}},
                        {"re_psi", number(b.re_psi)},
                        {"im_psi", number(b.im_psi)},
                        {"gamma", number(b.gamma)},
                        {"abs2", number(b.abs2())},
                        {"arg", number(b.arg())},
                        {"sigma_re", number(b.sigma_re)},
                        {"sigma_im", number(b.sigma_im)},
                        {"sigma_gamma", number(b.sigma_gamma)},
                        {"sigma_abs2", number(b.sigma_abs2)},
                        {"sigma_arg", number(b.sigma_arg)},
                        {"radicand", number(b.radicand)},
                        {"status", to_string(b.status)},
                        {"valid", b.valid()},
                        {"root_ambiguous", b.root_ambiguous}});
    }
    j["bins"] = std::move(bins);
    return j;
}

ReconstructedTpwf reconstruction_from_json(const Json& j) {
    expect_format(j, "biphoton.reconstruction");
    ReconstructedTpwf recon;
    try {
        recon.bin_width = j.at("bin_width").get<double>();
        const auto& opt = j.at("options");
        recon.options.background_mode = parse_background_mode(opt.at("background_mode").get<std::string>());
        recon.options.gamma_mode = parse_gamma_mode(opt.at("gamma_mode").get<std::string>());
        recon.options.wing_fraction = opt.at("wing_fraction").get<double>();
        recon.options.root = opt.at("root") == "smaller" ? RootChoice::smaller : RootChoice::larger;
        recon.background = read_number(j.at("background"), kNaN);
        recon.sigma_background = read_number(j.at("sigma_background"), kNaN);
        recon.wing_level = read_number(j.at("wing_level"), kNaN);
        recon.pooled_gamma = read_number(j.at("pooled_gamma"), kNaN);
        recon.sigma_pooled_gamma = read_number(j.at("sigma_pooled_gamma"), kNaN);
        for (const auto& b : j.at("bins")) {
            ReconstructedBin bin;
            bin.tau = b.at("tau").get<double>();
            for (int k = 0; k < 3; ++k) bin.y[k] = read_number(b.at("y").at(k), kNaN);
            bin.re_psi = read_number(b.at("re_psi"), kNaN);
            bin.im_psi = read_number(b.at("im_psi"), kNaN);
            bin.gamma = read_number(b.at("gamma"), kNaN);
            bin.sigma_re = read_number(b.at("sigma_re"), kInf);
            bin.sigma_im = read_number(b.at("sigma_im"), kInf);
            bin.sigma_gamma = read_number(b.at("sigma_gamma"), kInf);
            bin.sigma_abs2 = read_number(b.at("sigma_abs2"), kInf);
            bin.sigma_arg = read_number(b.at("sigma_arg"), kInf);
            bin.radicand = read_number(b.at("radicand"), kNaN);
            bin.status = parse_status(b.at("status").get<std::string>());
            bin.root_ambiguous = b.at("root_ambiguous").get<bool>();
            recon.bins.push_back(bin);
        }
    } catch (const Json::exception& e) {
        throw DataError(std::string("reconstruction JSON: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("reconstruction JSON: ") + e.what());
    }
    return recon;
}

Json to_json(const FitResult& fit) {
    Json j;
    j["format"] = "biphoton.fit";
    j["version"] = kJsonVersion;
    j["model"] = fit.model;
    j["units"] = fit.model == "visibility"
                     ? Json{{"x", "rad"}, {"phi_max", "rad"}, {"phi_min", "rad"}}
                     : Json{{"x", "s"}, {"tau_offset", "s"}, {"corr_time", "s"}, {"fwhm", "s"}, {"phase", "rad"}};
    Json params = Json::array();
    for (const auto& p : fit.params) {
        params.push_back({{"name", p.name}, {"value", number(p.value)}, {"sigma", number(p.sigma)}, {"fixed", p.fixed}});
    }
    j["params"] = std::move(params);
    j["chi2"] = number(fit.chi2);
    j["ndof"] = fit.ndof;
    j["reduced_chi2"] = number(fit.reduced_chi2());
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["message"] = fit.message;
    j["x"] = fit.x;
    j["data"] = fit.data;
    j["sigma"] = fit.sigma;
    j["fitted"] = fit.fitted;
    j["residuals"] = fit.pulls();
    return j;
}

}  // namespace biphoton
