// pearl: run placement pipelines, score them, generate baselines and record
// backend fixtures.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>

#include "json.hpp"
#include "pearl/backend.hpp"
#include "pearl/codec.hpp"
#include "pearl/error.hpp"
#include "pearl/metrics.hpp"
#include "pearl/pipeline.hpp"
#include "pearl/report.hpp"
#include "pearl/scene_data.hpp"
#include "pearl/simulated_bridge.hpp"
#include "pearl/synthetic.hpp"
#include "pearl/text.hpp"

#ifndef PEARL_VERSION
#define PEARL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;
using namespace pearl;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::InvalidConfig:
        case ErrorKind::TemplateMissingPlaceholder:
        case ErrorKind::MissingFile:
        case ErrorKind::MalformedInput:
        case ErrorKind::MalformedAnnotation:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::UnknownLabelId:
        case ErrorKind::MissingTags:
        case ErrorKind::MissingSelection:
        case ErrorKind::MissingPlacement:
        case ErrorKind::MissingAnnotationPoint:
            return kExitUsage;
        default:
            return kExitRuntime;
    }
}

std::string timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

OJson manifest(const std::string& command, OJson config, const std::string& dataset_digest,
               const std::string& backend_mode, std::uint64_t seed) {
    OJson m;
    m["tool"] = "pearl";
    m["version"] = PEARL_VERSION;
    m["command"] = command;
    m["config"] = std::move(config);
    m["dataset_digest"] = dataset_digest.empty() ? OJson(nullptr) : OJson(dataset_digest);
    m["backend_mode"] = backend_mode;
    m["seed"] = seed;
    m["timestamp"] = timestamp();
    return m;
}

std::string manifest_line(const OJson& m) { return OJson{{"manifest", m}}.dump() + "\n"; }

void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
    } else {
        io::write_text(path, content);
    }
}

std::string file_digest(const std::string& path) { return codec::sha256_hex(io::read_file(path)); }

pipeline::PipelineConfig load_config(const std::string& preset, const std::string& config_path) {
    if (preset.empty() == config_path.empty()) throw UsageError("give exactly one of --preset or --config");
    if (!preset.empty()) {
        try {
            return pipeline::preset(preset);
        } catch (const Error& e) {
            throw UsageError(e.detail());
        }
    }
    return pipeline::PipelineConfig::parse_json(io::read_text(config_path));
}

std::vector<std::pair<std::string, std::string>> annotated_pairs(const scene::DatasetIndex& dataset,
                                                                 const std::string& only_object) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& [image, objects] : dataset.annotations.images) {
        for (const auto& a : objects) {
            if (a.excluded) continue;
            if (!only_object.empty() && a.object != text::normalize_label(only_object)) continue;
            pairs.emplace_back(image, a.object);
        }
    }
    return pairs;
}

std::string safe_name(std::string s) {
    for (auto& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return s;
}

void annotate(const scene::SceneImage& image, geom::Point2D p, const fs::path& path) {
    auto copy = image.pixels;
    const int radius = std::max(4, std::min(copy.width, copy.height) / 40);
    io::draw_marker(copy, p, radius, 255, 0, 0);
    io::write_png_rgb(path, copy);
}

// Lines of a JSON-lines input, skipping blank lines, manifests and error rows.
std::vector<nlohmann::json> read_records(const std::string& path) {
    std::vector<nlohmann::json> out;
    std::size_t line_no = 0;
    for (const auto& line : text::split(io::read_text(path), '\n')) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::MalformedInput, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object()) throw Error(ErrorKind::MalformedInput, path + ":" + std::to_string(line_no) + ": not an object");
        if (j.contains("manifest") || j.contains("error")) continue;
        out.push_back(std::move(j));
    }
    return out;
}

std::string field(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw Error(ErrorKind::MalformedInput, where + ": missing string '" + key + "'");
    }
    return j[key].get<std::string>();
}

// -- place --------------------------------------------------------------------

struct PlaceArgs {
    std::string image;
    std::string depth;
    std::string object;
    std::string dataset;
    std::string preset;
    std::string config;
    std::string backend;
    std::string out;
    std::string annotate;
    unsigned jobs = 1;
};

int cmd_place(const PlaceArgs& a) {
    if (a.dataset.empty() == a.image.empty()) throw UsageError("give exactly one of --image or --dataset");
    if (!a.image.empty() && text::trim(a.object).empty()) throw UsageError("--object must be a non-empty name");
    const auto cfg = load_config(a.preset, a.config);
    auto transport = backend::open_transport(a.backend);
    backend::ThrottledTransport throttled(*transport, std::max(1u, a.jobs));

    std::vector<pipeline::PipelineResult> results;
    std::string digest;
    scene::DatasetIndex single;
    const scene::DatasetIndex* dataset = &single;
    scene::DatasetIndex loaded;
    if (!a.dataset.empty()) {
        loaded = scene::load_dataset(a.dataset, {.objects = std::nullopt, .max_label_id = scene::kMaxLabelId, .jobs = a.jobs});
        dataset = &loaded;
        digest = loaded.digest();
        results = pipeline::run_pipelines(loaded, annotated_pairs(loaded, a.object), cfg, throttled, a.jobs);
    } else {
        scene::SceneEntry entry;
        entry.image.id = fs::path(a.image).stem().string();
        entry.image.pixels = io::read_png_rgb(a.image);
        if (!a.depth.empty()) {
            auto depth = io::read_png_gray16(a.depth);
            if (depth.width != entry.image.width() || depth.height != entry.image.height()) {
                throw Error(ErrorKind::DimensionMismatch, "depth map size differs from the image");
            }
            entry.image.depth_mm = std::move(depth.values);
        }
        digest = backend::image_digest(entry.image.pixels);
        const auto id = entry.image.id;
        single.scenes.emplace(id, std::move(entry));
        results = pipeline::run_pipelines(single, {{id, text::normalize_label(a.object)}}, cfg, throttled, 1);
    }

    std::string out = manifest_line(manifest("place", cfg.to_json(), digest, transport->mode(), cfg.seed));
    int failures = 0;
    for (const auto& r : results) {
        if (r.ok()) {
            const auto& rec = std::get<pipeline::PlacementRecord>(r.outcome);
            out += rec.dump() + "\n";
            if (!a.annotate.empty()) {
                const fs::path target = a.dataset.empty()
                                            ? fs::path(a.annotate)
                                            : fs::path(a.annotate) / (safe_name(r.image) + "__" + safe_name(r.object) + ".png");
                annotate(dataset->scene(r.image).image, rec.point, target);
            }
        } else {
            const auto& e = std::get<Error>(r.outcome);
            ++failures;
            std::cerr << "pearl place: " << r.image << " / " << r.object << ": " << e.what() << "\n";
            OJson line;
            line["image"] = r.image;
            line["object"] = r.object;
            line["error"] = {{"kind", to_string(e.kind())}, {"stage", e.stage()}, {"message", e.detail()}};
            out += line.dump() + "\n";
        }
    }
    emit(a.out, out);
    return failures ? kExitRuntime : 0;
}

// -- eval ---------------------------------------------------------------------

struct EvalArgs {
    int stage = 3;
    std::string dataset;
    std::vector<std::string> inputs;
    std::string embeddings;
    std::string backend;
    std::string out;
    std::string format = "csv";
    bool flat = false;
    unsigned jobs = 1;
};

std::pair<std::string, std::string> split_input(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) return {fs::path(arg).stem().string(), arg};
    if (eq == 0 || eq + 1 == arg.size()) throw UsageError("--inputs expects name=path, got '" + arg + "'");
    return {arg.substr(0, eq), arg.substr(eq + 1)};
}

metrics::TagLists read_tag_lists(const std::string& path) {
    metrics::TagLists tags;
    for (const auto& j : read_records(path)) {
        const auto image = field(j, "image", path);
        const char* key = j.contains("tags") ? "tags" : "tags_post";
        if (!j.contains(key) || !j[key].is_array()) throw Error(ErrorKind::MalformedInput, path + ": missing 'tags'");
        tags.try_emplace(image, j[key].get<std::vector<std::string>>());
    }
    return tags;
}

std::map<metrics::PairKey, std::string> read_selections(const std::string& path) {
    std::map<metrics::PairKey, std::string> out;
    for (const auto& j : read_records(path)) {
        metrics::PairKey key{field(j, "image", path), text::normalize_label(field(j, "object", path))};
        if (!j.contains("selected") || j["selected"].is_null()) continue;
        if (!j["selected"].is_string()) throw Error(ErrorKind::MalformedInput, path + ": 'selected' must be a string");
        if (!out.emplace(key, j["selected"].get<std::string>()).second) {
            throw Error(ErrorKind::MalformedInput, path + ": duplicate pair (" + key.image + ", " + key.object + ")");
        }
    }
    return out;
}

metrics::Placements read_placements(const std::string& path) {
    metrics::Placements out;
    for (const auto& j : read_records(path)) {
        metrics::PairKey key{field(j, "image", path), text::normalize_label(field(j, "object", path))};
        const auto& p = j.contains("point") ? j["point"] : nlohmann::json();
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
            throw Error(ErrorKind::MalformedInput, path + ": 'point' must be [x, y] integers");
        }
        if (!out.emplace(key, geom::Point2D{p[0].get<int>(), p[1].get<int>()}).second) {
            throw Error(ErrorKind::MalformedInput, path + ": duplicate pair (" + key.image + ", " + key.object + ")");
        }
    }
    return out;
}

int cmd_eval(const EvalArgs& a) {
    if (a.inputs.empty()) throw UsageError("--inputs needs at least one name=path");
    const auto format = [&] {
        try {
            return metrics::parse_table_format(a.format);
        } catch (const Error& e) {
            throw UsageError(e.detail());
        }
    }();
    std::vector<std::pair<std::string, std::string>> inputs;
    std::set<std::string> names;
    for (const auto& arg : a.inputs) {
        inputs.push_back(split_input(arg));
        if (!names.insert(inputs.back().first).second) throw UsageError("duplicate input name '" + inputs.back().first + "'");
    }

    std::unique_ptr<metrics::EmbeddingProvider> base;
    std::unique_ptr<backend::Transport> transport;
    std::string backend_mode = "none";
    if (a.stage != 3) {
        if (a.embeddings.empty() == a.backend.empty()) throw UsageError("stages 1 and 2 need one of --embeddings or --backend");
        if (!a.embeddings.empty()) {
            base = std::make_unique<metrics::FixtureEmbeddings>(metrics::FixtureEmbeddings::load(a.embeddings));
            backend_mode = "fixture";
        } else {
            transport = backend::open_transport(a.backend);
            backend_mode = transport->mode();
            base = std::make_unique<backend::BackendEmbeddings>(*transport);
        }
    }

    const auto dataset = scene::load_dataset(a.dataset, {.objects = std::nullopt, .max_label_id = scene::kMaxLabelId, .jobs = a.jobs});
    std::vector<std::string> order;
    OJson input_list = OJson::array();
    for (const auto& [name, path] : inputs) {
        order.push_back(name);
        input_list.push_back({{"name", name}, {"sha256", file_digest(path)}});
    }
    OJson config{{"stage", a.stage}, {"inputs", input_list}, {"format", a.format}, {"flat", a.flat}};
    const auto m = manifest("eval", config, dataset.digest(), backend_mode, 0);

    std::vector<metrics::Stage1Row> s1;
    std::vector<metrics::Stage2Row> s2;
    std::vector<metrics::Stage3Row> s3;
    std::string audit;
    if (a.stage == 1 || a.stage == 2) {
        metrics::MemoizedEmbeddings provider(*base);
        for (const auto& [name, path] : inputs) {
            if (a.stage == 1) {
                s1.push_back({name, metrics::stage1_metrics(read_tag_lists(path), dataset.annotations, provider)});
            } else {
                s2.push_back({name, metrics::stage2_metrics(read_selections(path), dataset.annotations, provider,
                                                            {.flat = a.flat})});
            }
        }
    } else if (a.stage == 3) {
        const auto [pairs, exclusions] = scene::filter_evaluable_pairs(dataset);
        for (const auto& [name, path] : inputs) {
            auto report = metrics::stage3_metrics(read_placements(path), pairs, a.jobs);
            audit += metrics::audit_jsonl(report, name);
            s3.push_back({name, std::move(report)});
        }
    } else {
        throw UsageError("--stage must be 1, 2 or 3");
    }

    const auto report = metrics::build_report(std::move(s1), std::move(s2), std::move(s3), order);
    const auto rendered = metrics::render_report(report, format);
    std::string out;
    if (format == metrics::TableFormat::Json) {
        OJson j;
        j["manifest"] = m;
        j["report"] = OJson::parse(rendered);
        out = j.dump(2) + "\n";
    } else {
        out = "# manifest: " + m.dump() + "\n" + rendered;
    }
    emit(a.out, out);
    if (a.stage == 3 && !a.out.empty() && a.out != "-") io::write_text(a.out + ".audit.jsonl", manifest_line(m) + audit);
    return 0;
}

// -- baseline -----------------------------------------------------------------

struct BaselineArgs {
    std::string kind;
    std::string dataset;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_baseline(const BaselineArgs& a) {
    if (a.kind != "random" && a.kind != "natural" && a.kind != "unnatural") {
        throw UsageError("--kind must be random, natural or unnatural");
    }
    const auto dataset = scene::load_dataset(a.dataset);
    const auto [pairs, exclusions] = scene::filter_evaluable_pairs(dataset);
    std::string out = manifest_line(manifest("baseline", OJson{{"kind", a.kind}}, dataset.digest(), "none", a.seed));
    for (const auto& p : pairs) {
        geom::Point2D point;
        if (a.kind == "random") {
            point = scene::random_placement(p.mask.width(), p.mask.height(), a.seed, p.image_id, p.object);
        } else {
            const auto* ann = dataset.annotations.find(p.image_id, p.object);
            const auto& chosen = a.kind == "natural" ? ann->natural : ann->unnatural;
            if (!chosen) {
                throw Error(ErrorKind::MissingAnnotationPoint,
                            "no " + a.kind + " point for (" + p.image_id + ", " + p.object + ")");
            }
            point = *chosen;
        }
        OJson line;
        line["image"] = p.image_id;
        line["object"] = p.object;
        line["point"] = {point.x, point.y};
        out += line.dump() + "\n";
    }
    emit(a.out, out);
    return 0;
}

// -- record-fixtures ----------------------------------------------------------

struct RecordArgs {
    std::string url;
    std::string dataset;
    std::string preset;
    std::string config;
    std::string out;
    std::string placements;
    unsigned jobs = 1;
};

int cmd_record(const RecordArgs& a) {
    const auto cfg = load_config(a.preset, a.config);
    const auto dataset = scene::load_dataset(a.dataset);
    backend::HttpTransport http(a.url);
    backend::RecordingTransport recorder(http);
    backend::ThrottledTransport throttled(recorder, std::max(1u, a.jobs));
    const auto results = pipeline::run_pipelines(dataset, annotated_pairs(dataset, ""), cfg, throttled, a.jobs);
    for (const auto& r : results) {
        if (!r.ok()) {
            const auto& e = std::get<Error>(r.outcome);
            std::cerr << "pearl record-fixtures: " << r.image << " / " << r.object << ": " << e.what() << "\n";
            return exit_code_for(e.kind());
        }
    }
    io::write_text(a.out, recorder.fixture_jsonl());
    const auto m = manifest("record-fixtures", cfg.to_json(), dataset.digest(), "http", cfg.seed);
    io::write_text(a.out + ".manifest.json", m.dump(2) + "\n");
    if (!a.placements.empty()) {
        std::string out = manifest_line(m);
        for (const auto& r : results) out += std::get<pipeline::PlacementRecord>(r.outcome).dump() + "\n";
        io::write_text(a.placements, out);
    }
    return 0;
}

// -- synth --------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int scenes = 10;
    int width = 96;
    int height = 72;
    std::uint64_t seed = 1;
    int objects_per_scene = 3;
    bool no_depth = false;
    std::string fixtures;
    std::vector<std::string> presets = {"octo-plus", "octopus"};
    std::string embeddings;
    unsigned jobs = 1;
};

int cmd_synth(const SynthArgs& a) {
    scene::SyntheticConfig cfg;
    cfg.scenes = a.scenes;
    cfg.width = a.width;
    cfg.height = a.height;
    cfg.seed = a.seed;
    cfg.objects_per_scene = a.objects_per_scene;
    cfg.with_depth = !a.no_depth;
    const auto dataset = scene::generate_synthetic_dataset(cfg);
    scene::write_dataset(a.out, dataset);

    if (!a.fixtures.empty()) {
        sim::SimulatedBridge bridge(dataset);
        backend::RecordingTransport recorder(bridge);
        for (const auto& name : a.presets) {
            const auto results =
                pipeline::run_pipelines(dataset, annotated_pairs(dataset, ""), load_config(name, ""), recorder, a.jobs);
            for (const auto& r : results) {
                if (!r.ok()) {
                    std::cerr << "pearl synth: " << name << " " << r.image << " / " << r.object << ": "
                              << std::get<Error>(r.outcome).what() << "\n";
                }
            }
        }
        io::write_text(a.fixtures, recorder.fixture_jsonl());
    }
    if (!a.embeddings.empty()) {
        nlohmann::ordered_json vectors = nlohmann::ordered_json::object();
        for (const auto& w : sim::tagger_vocabulary(dataset)) vectors[w] = sim::trigram_embedding(w);
        nlohmann::ordered_json j;
        j["dim"] = sim::trigram_embedding("").size();
        j["vectors"] = vectors;
        io::write_text(a.embeddings, j.dump() + "\n");
    }
    std::cout << "wrote " << dataset.scenes.size() << " scenes to " << a.out << " (digest " << dataset.digest() << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-vocabulary object placement and PEARL evaluation"};
    app.set_version_flag("--version", PEARL_VERSION);
    app.require_subcommand(1);

    PlaceArgs place;
    auto* p = app.add_subcommand("place", "Run a placement pipeline on one image or a whole dataset");
    p->add_option("--image", place.image, "Scene image (PNG)");
    p->add_option("--depth", place.depth, "Depth map in millimeters (16-bit PNG) for --image");
    p->add_option("--object", place.object, "Object to place (restricts --dataset runs to it)");
    p->add_option("--dataset", place.dataset, "Dataset root: run every annotated pair");
    p->add_option("--preset", place.preset, "octo-plus | octopus");
    p->add_option("--config", place.config, "Pipeline config (JSON)");
    p->add_option("--backend", place.backend, "Fixture file (.jsonl) or bridge URL (http://host:port)")->required();
    p->add_option("--out,--placements", place.out, "PlacementRecord JSON-lines output (default stdout)");
    p->add_option("--annotate", place.annotate, "Marked-up copy of the image (directory with --dataset)");
    p->add_option("--jobs", place.jobs, "Concurrent pipeline runs")->check(CLI::PositiveNumber);

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Score tag lists, selections or placements");
    e->add_option("--stage", eval.stage, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
    e->add_option("--dataset", eval.dataset, "Dataset root")->required();
    e->add_option("--inputs", eval.inputs, "name=path per method; row order follows the flags")->required();
    e->add_option("--embeddings", eval.embeddings, "Embedding fixture JSON (stages 1 and 2)");
    e->add_option("--backend", eval.backend, "Fixture file or bridge URL serving /v1/embed");
    e->add_option("--out", eval.out, "Report path (default stdout); stage 3 also writes <out>.audit.jsonl");
    e->add_option("--format", eval.format, "csv | table | json");
    e->add_flag("--flat", eval.flat, "Stage 2: average over pairs instead of per image");
    e->add_option("--jobs", eval.jobs, "Worker threads")->check(CLI::PositiveNumber);

    BaselineArgs base;
    auto* b = app.add_subcommand("baseline", "Write natural, unnatural or random placements");
    b->add_option("--kind", base.kind, "random | natural | unnatural")->required();
    b->add_option("--dataset", base.dataset, "Dataset root")->required();
    b->add_option("--seed", base.seed, "Seed for random placements");
    b->add_option("--out", base.out, "Placements JSON-lines (default stdout)");

    RecordArgs rec;
    auto* r = app.add_subcommand("record-fixtures", "Run a preset against a live bridge and save its responses");
    r->add_option("--backend-url", rec.url, "Bridge base URL")->required();
    r->add_option("--dataset", rec.dataset, "Dataset root")->required();
    r->add_option("--preset", rec.preset, "octo-plus | octopus");
    r->add_option("--config", rec.config, "Pipeline config (JSON)");
    r->add_option("--out", rec.out, "Fixture JSON-lines")->required();
    r->add_option("--placements", rec.placements, "Also write the PlacementRecords");
    r->add_option("--jobs", rec.jobs, "Concurrent pipeline runs")->check(CLI::PositiveNumber);

    SynthArgs syn;
    auto* s = app.add_subcommand("synth", "Generate a synthetic benchmark with exact ground truth");
    s->add_option("--out", syn.out, "Dataset root to create")->required();
    s->add_option("--scenes", syn.scenes, "Number of scenes")->check(CLI::NonNegativeNumber);
    s->add_option("--width", syn.width, "Image width");
    s->add_option("--height", syn.height, "Image height");
    s->add_option("--seed", syn.seed, "Generator seed");
    s->add_option("--objects-per-scene", syn.objects_per_scene, "Annotated objects per scene");
    s->add_flag("--no-depth", syn.no_depth, "Skip depth maps");
    s->add_option("--fixtures", syn.fixtures, "Also record a simulated backend session here");
    s->add_option("--presets", syn.presets, "Presets to record with --fixtures");
    s->add_option("--embeddings", syn.embeddings, "Also write an embedding fixture for the vocabulary");
    s->add_option("--jobs", syn.jobs, "Concurrent pipeline runs")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*p) return cmd_place(place);
        if (*e) return cmd_eval(eval);
        if (*b) return cmd_baseline(base);
        if (*r) return cmd_record(rec);
        if (*s) return cmd_synth(syn);
    } catch (const UsageError& err) {
        std::cerr << "pearl: " << err.what() << "\n";
        return kExitUsage;
    } catch (const Error& err) {
        std::cerr << "pearl: " << err.what() << "\n";
        return exit_code_for(err.kind());
    } catch (const std::exception& err) {
        std::cerr << "pearl: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
