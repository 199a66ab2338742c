//! Plotting scripts written next to the CSVs. They read the CSVs from
//! their own directory, so figures can be regenerated from the artifacts.

pub const FIG1: &str = r#"import csv, glob, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
files = sorted(glob.glob(os.path.join(here, "fig1_K*.csv")))
fig, axes = plt.subplots(1, len(files), figsize=(6 * len(files), 4), squeeze=False)
for ax, path in zip(axes[0], files):
    rows = list(csv.DictReader(open(path)))
    epoch = [int(r["epoch"]) for r in rows]
    for col, style in [("mlp_train_loss", "C0-"), ("mlp_test_loss", "C0--"),
                       ("gnn_train_loss", "C1-"), ("gnn_test_loss", "C1--"),
                       ("wmmse_test_loss", "k:")]:
        ax.plot(epoch, [float(r[col]) for r in rows], style, label=col)
    ax.set_title(os.path.basename(path)[:-4])
    ax.set_xlabel("epoch")
    ax.set_ylabel("negative sum rate")
    ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "fig1.png"), dpi=150)
"#;

pub const FIG2: &str = r#"import csv, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "landscape.csv"))))
n = [int(r["n"]) for r in rows]
plt.semilogy(n, [float(r["cond_mlp"]) for r in rows], "o-", label="MLP")
plt.semilogy(n, [float(r["cond_gnn"]) for r in rows], "s-", label="GNN")
plt.xlabel("nodes n")
plt.ylabel("condition number")
plt.legend()
plt.tight_layout()
plt.savefig(os.path.join(here, "fig2.png"), dpi=150)
"#;

pub const FIG3: &str = r#"import csv, glob, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4))
for path in sorted(glob.glob(os.path.join(here, "m*", "*", "trace.csv"))):
    model = os.path.basename(os.path.dirname(path))
    m = os.path.basename(os.path.dirname(os.path.dirname(path)))
    rows = list(csv.DictReader(open(path)))
    ax1.plot([int(r["epoch"]) for r in rows], [float(r["train_loss"]) for r in rows],
             label=f"{model.upper()}_train_{m[1:]}")
ax1.set_xlabel("epoch")
ax1.set_ylabel("training loss")
ax1.legend()
rows = list(csv.DictReader(open(os.path.join(here, "lambda_min.csv"))))
m = [int(r["m"]) for r in rows]
ax2.loglog(m, [float(r["lambda_min_mlp"]) for r in rows], "o-", label="MLP")
ax2.loglog(m, [abs(float(r["lambda_min_gnn"])) for r in rows], "s-", label="GNN")
ax2.set_xlabel("training samples m")
ax2.set_ylabel("smallest kernel eigenvalue")
ax2.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "fig3.png"), dpi=150)
"#;

pub const NTK_REGIME: &str = r#"import csv, glob, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "trajectory_w*.csv")),
                   key=lambda p: int(os.path.basename(p)[12:-4])):
    rows = list(csv.DictReader(open(path)))
    t = [float(r["t"]) for r in rows]
    width = os.path.basename(path)[12:-4]
    line, = plt.semilogy(t, [float(r["loss_net"]) for r in rows], label=f"width {width}")
    plt.semilogy(t, [float(r["loss_pred"]) for r in rows], "--", color=line.get_color())
plt.xlabel("t = lr * epoch / m")
plt.ylabel("training loss (dashed: kernel prediction)")
plt.legend()
plt.tight_layout()
plt.savefig(os.path.join(here, "ntk_regime.png"), dpi=150)
"#;

pub const THM3: &str = r#"import csv, glob, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "thm3.csv"))))
cells = sorted({(int(r["p"]), int(r["n"])) for r in rows})
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4))
for p, n in cells:
    sel = [r for r in rows if int(r["p"]) == p and int(r["n"]) == n]
    t = [float(r["t"]) for r in sel]
    line, = ax1.semilogy(t, [float(r["thm3_mlp"]) for r in sel], label=f"p={p} n={n}")
    ax1.semilogy(t, [float(r["thm3_gnn"]) for r in sel], "--", color=line.get_color())
ax1.set_xlabel("t")
ax1.set_ylabel("bound (solid: MLP, dashed: GNN)")
ax1.legend(fontsize=7)
for path in sorted(glob.glob(os.path.join(here, "residuals", "*.csv"))):
    res = list(csv.DictReader(open(path)))[1:]
    t = [float(r["t"]) for r in res]
    line, = ax2.loglog(t, [float(r["mlp"]) for r in res], label=os.path.basename(path)[:-4])
    ax2.loglog(t, [float(r["gnn"]) for r in res], "--", color=line.get_color())
ax2.axhline(0.01, color="k", lw=0.5)
ax2.set_xlabel("t")
ax2.set_ylabel("relative residual (solid: MLP, dashed: GNN)")
ax2.legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(here, "thm3.png"), dpi=150)
"#;

pub const THM45: &str = r#"import csv, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = [r for r in csv.DictReader(open(os.path.join(here, "thm45.csv"))) if r["ratio"]]
for p in sorted({int(r["p"]) for r in rows}):
    sel = [r for r in rows if int(r["p"]) == p]
    plt.plot([int(r["n"]) for r in sel], [float(r["ratio"]) for r in sel], "o-", label=f"p={p}")
plt.xlabel("nodes n")
plt.ylabel("MLP bound / GNN bound")
plt.legend()
plt.tight_layout()
plt.savefig(os.path.join(here, "thm45.png"), dpi=150)
"#;

pub const TRAIN: &str = r#"import csv, os
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "trace.csv"))))
epoch = [int(r["epoch"]) for r in rows]
plt.plot(epoch, [float(r["train_loss"]) for r in rows], label="train")
if rows and rows[0]["test_loss"]:
    plt.plot(epoch, [float(r["test_loss"]) for r in rows], label="test")
plt.xlabel("epoch")
plt.ylabel("loss")
plt.legend()
plt.tight_layout()
plt.savefig(os.path.join(here, "trace.png"), dpi=150)
"#;
