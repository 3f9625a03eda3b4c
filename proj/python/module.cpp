#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "convexfem/demos.hpp"
#include "convexfem/io.hpp"
#include "convexfem/problem.hpp"

namespace py = pybind11;
using namespace convexfem;

namespace {

DemoConfig make_config(const py::kwargs& kwargs) {
  DemoConfig cfg;
  for (auto item : kwargs) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "demo") cfg.demo = py::cast<std::string>(item.second);
    else if (key == "n") cfg.n = py::cast<int>(item.second);
    else if (key == "diagonal")
      cfg.diagonal = parse_diagonal(py::cast<std::string>(item.second));
    else if (key == "variant") cfg.variant = py::cast<std::string>(item.second);
    else if (key == "norm") cfg.norm = py::cast<std::string>(item.second);
    else if (key == "out") cfg.out_dir = py::cast<std::string>(item.second);
    else if (key == "tol") cfg.tol = py::cast<double>(item.second);
    else if (key == "seed") cfg.seed = py::cast<unsigned>(item.second);
    else if (key == "export_program")
      cfg.export_program = py::cast<bool>(item.second);
    else if (py::isinstance<py::str>(item.second))
      cfg.str_params[key] = py::cast<std::string>(item.second);
    else
      cfg.params[key] = py::cast<double>(item.second);
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_convexfem, m) {
  m.doc() = "convex variational problems on triangular meshes, solved as "
            "conic programs";

  py::register_exception<MeshError>(m, "MeshError");
  py::register_exception<ParseError>(m, "ParseError");

  py::enum_<Diagonal>(m, "Diagonal")
      .value("left", Diagonal::Left)
      .value("right", Diagonal::Right)
      .value("crossed", Diagonal::Crossed);

  py::class_<TriMesh, std::shared_ptr<TriMesh>>(m, "TriMesh")
      .def_property_readonly("num_vertices", &TriMesh::num_vertices)
      .def_property_readonly("num_cells", &TriMesh::num_cells)
      .def_property_readonly("num_facets", &TriMesh::num_facets)
      .def_property_readonly("total_area", &TriMesh::total_area)
      .def("vertex", [](const TriMesh& mesh, int v) {
        return Eigen::Vector2d(mesh.vertex(v));
      })
      .def("cell", [](const TriMesh& mesh, int c) { return mesh.cell(c); })
      .def("boundary_marker", &TriMesh::boundary_marker)
      .def("__repr__", [](const TriMesh& mesh) {
        std::ostringstream ss;
        ss << "TriMesh(vertices=" << mesh.num_vertices()
           << ", cells=" << mesh.num_cells() << ")";
        return ss.str();
      });

  m.def("unit_square_mesh",
        [](int n, const std::string& diagonal) {
          return std::make_shared<TriMesh>(
              unit_square_mesh(n, parse_diagonal(diagonal)));
        },
        py::arg("n"), py::arg("diagonal") = "right");
  m.def("read_mesh", [](const std::string& text) {
    std::istringstream ss(text);
    return std::make_shared<TriMesh>(read_mesh(ss));
  });
  m.def("write_mesh", [](const std::shared_ptr<TriMesh>& mesh) {
    std::ostringstream ss;
    write_mesh(*mesh, ss);
    return ss.str();
  });

  py::enum_<ConeKind>(m, "ConeKind")
      .value("free", ConeKind::Free)
      .value("nonneg", ConeKind::NonNeg)
      .value("quad", ConeKind::Quad)
      .value("rquad", ConeKind::RQuad);

  py::class_<Cone>(m, "Cone")
      .def(py::init([](const std::string& kind, int dim) {
        if (kind == "free") return Cone::free(dim);
        if (kind == "nonneg") return Cone::nonneg(dim);
        if (kind == "quad") return Cone::quad(dim);
        if (kind == "rquad") return Cone::rquad(dim);
        throw std::invalid_argument("unknown cone kind '" + kind + "'");
      }))
      .def_readonly("dim", &Cone::dim);

  m.def("cone_contains",
        [](const Cone& cone, const Eigen::VectorXd& z, double tol) {
          return cone_contains(cone, z, tol);
        },
        py::arg("cone"), py::arg("z"), py::arg("tol") = 0.0);

  // flat conic programs and the interior-point solver
  py::class_<StandardConicProgram>(m, "ConicProgram")
      .def_property_readonly("num_vars", &StandardConicProgram::num_vars)
      .def_property_readonly("num_rows", &StandardConicProgram::num_rows)
      .def_readonly("cost", &StandardConicProgram::cost);

  py::class_<ProgramBuilder>(m, "ProgramBuilder")
      .def(py::init<>())
      .def("add_vars", &ProgramBuilder::add_vars, py::arg("count"),
           py::arg("lower") = -kInf, py::arg("upper") = kInf)
      .def("add_cone_vars", &ProgramBuilder::add_cone_vars)
      .def("set_var_bounds", &ProgramBuilder::set_var_bounds)
      .def("add_cost", &ProgramBuilder::add_cost)
      .def("add_row", &ProgramBuilder::add_row, py::arg("entries"),
           py::arg("lower"), py::arg("upper"))
      .def("set_maximize", &ProgramBuilder::set_maximize)
      .def("build", &ProgramBuilder::build);

  py::class_<IpmSettings>(m, "IpmSettings")
      .def(py::init<>())
      .def_readwrite("feas_tol", &IpmSettings::feas_tol)
      .def_readwrite("gap_tol", &IpmSettings::gap_tol)
      .def_readwrite("max_iter", &IpmSettings::max_iter);

  py::class_<IpmResult>(m, "IpmResult")
      .def_property_readonly("status", [](const IpmResult& r) {
        return std::string(to_string(r.status));
      })
      .def_readonly("x", &IpmResult::x)
      .def_readonly("objective", &IpmResult::objective)
      .def_readonly("gap", &IpmResult::gap)
      .def_readonly("iterations", &IpmResult::iterations);

  m.def("solve",
        [](const StandardConicProgram& program, const IpmSettings& settings) {
          return solve(program, settings);
        },
        py::arg("program"), py::arg("settings") = IpmSettings{});

  m.def("export_program", [](const StandardConicProgram& program) {
    std::ostringstream ss;
    export_program(program, ss);
    return ss.str();
  });
  m.def("import_program", [](const std::string& text) {
    std::istringstream ss(text);
    return import_program(ss);
  });

  // demo driver
  py::class_<DemoResult>(m, "DemoResult")
      .def_property_readonly("status", [](const DemoResult& r) {
        return std::string(to_string(r.status));
      })
      .def_readonly("objective", &DemoResult::objective)
      .def_readonly("gap", &DemoResult::gap)
      .def_readonly("iterations", &DemoResult::iterations)
      .def_readonly("extras", &DemoResult::extras);

  m.def("run_demo", [](const std::string& demo, const py::kwargs& kwargs) {
    DemoConfig cfg = make_config(kwargs);
    cfg.demo = demo;
    return run_demo(cfg);
  });
  m.def("demo_names", [] { return demo_names(); });
}
