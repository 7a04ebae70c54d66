#pragma once

// Derivative-free minimisation with GSL's Nelder-Mead simplex (nmsimplex2).

#include "vecchia/error.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>

namespace vecchia {

struct NelderMeadOptions {
    int max_iter = 500;
    double size_tol = 1e-5;      // stop when the mean vertex distance to the centroid is below this
    double initial_step = 0.5;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evals = 0;
    int iterations = 0;
    bool converged = false;
};

// Non-finite objective values are replaced by a large penalty.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                                    const NelderMeadOptions& opt = {}) {
    require(x0.size() >= 1, "optimisation needs at least one free parameter");
    require(opt.max_iter >= 0 && opt.size_tol > 0.0 && opt.initial_step > 0.0, "invalid optimiser settings");
    constexpr double penalty = 1e100;
    NelderMeadResult res;
    struct Ctx {
        const std::function<double(const Eigen::VectorXd&)>* f;
        int* evals;
        std::exception_ptr err;
    } ctx{&f, &res.evals, nullptr};
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evals;
        const double v = f(x);
        return std::isfinite(v) ? v : penalty;
    };
    if (opt.max_iter == 0) {
        res.x = x0;
        res.f = eval(x0);
        return res;
    }

    const std::size_t n = static_cast<std::size_t>(x0.size());
    gsl_multimin_function fn;
    fn.n = n;
    fn.params = &ctx;
    fn.f = [](const gsl_vector* v, void* p) -> double {
        auto* c = static_cast<Ctx*>(p);
        if (c->err) return penalty;
        Eigen::VectorXd x(v->size);
        for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Eigen::Index>(i)) = gsl_vector_get(v, i);
        ++*c->evals;
        try {
            const double r = (*c->f)(x);
            return std::isfinite(r) ? r : penalty;
        } catch (...) {
            c->err = std::current_exception();
            return penalty;
        }
    };

    // GSL's default handler aborts; statuses are checked here instead.
    static const bool handler_off = (gsl_set_error_handler_off(), true);
    (void)handler_off;
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> x(gsl_vector_alloc(n), gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(n), gsl_vector_free);
    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> s(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n), gsl_multimin_fminimizer_free);
    for (std::size_t i = 0; i < n; ++i) {
        gsl_vector_set(x.get(), i, x0(static_cast<Eigen::Index>(i)));
        gsl_vector_set(step.get(), i, opt.initial_step);
    }
    int status = gsl_multimin_fminimizer_set(s.get(), &fn, x.get(), step.get());
    while (status == GSL_SUCCESS && res.iterations < opt.max_iter && !ctx.err) {
        ++res.iterations;
        status = gsl_multimin_fminimizer_iterate(s.get());
        if (status != GSL_SUCCESS) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s.get()), opt.size_tol) == GSL_SUCCESS) {
            res.converged = true;
            break;
        }
    }
    if (ctx.err) std::rethrow_exception(ctx.err);

    res.x.resize(x0.size());
    for (std::size_t i = 0; i < n; ++i) res.x(static_cast<Eigen::Index>(i)) = gsl_vector_get(gsl_multimin_fminimizer_x(s.get()), i);
    res.f = gsl_multimin_fminimizer_minimum(s.get());
    return res;
}

} // namespace vecchia
