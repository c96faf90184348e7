"""Calibration probe: how well does the part VAE reconstruct at various step counts,
and how fast is the width-256 denoiser? Informs acceptance-config choices."""
import json, time, sys
from pathlib import Path
import numpy as np, torch
torch.manual_seed(0)
from partforge.dataset import generate_object
from partforge.vae3d import Vae3dConfig
from partforge.training import VaeTrainConfig, train_vae3d
from partforge.sampling import sample_surface
from partforge.metrics import chamfer, containment
from partforge.evaluation import default_containment_tol

out = Path('/tmp/pf_probe'); out.mkdir(exist_ok=True)
t0 = time.time()
objects = [generate_object(s, (2,5)) for s in range(60)]
holdout = [generate_object(10_000 + s, (2,5)) for s in range(4)]
print(f'dataset {time.time()-t0:.0f}s', flush=True)

cfg = Vae3dConfig()
tcfg = VaeTrainConfig(steps=3000, batch_size=8, lr=1e-3, seed=0)
t0 = time.time()
model, recs = train_vae3d(objects, cfg, tcfg, log_path=out/'vae3d_log.jsonl')
print(f'train {time.time()-t0:.0f}s final loss {recs[-1]["total"]:.4f} bce {recs[-1]["bce"]:.4f}', flush=True)

def recon_stats(objs, label):
    chs, conts = [], []
    for o in objs:
        for p in o.parts:
            with torch.no_grad():
                tokens = model.encode(p.points, p.normals).mean
            try:
                mesh = model.extract_surface(tokens, 64)
            except Exception as e:
                print('  degenerate:', e); chs.append(float('nan')); continue
            pts, _ = sample_surface(mesh, 4096, seed=0)
            chs.append(chamfer(pts, p.points))
            conts.append(containment(mesh, p.box, tol=default_containment_tol(64)))
    print(f'{label}: chamfer mean {np.nanmean(chs):.4f} max {np.nanmax(chs):.4f} | containment(tol) mean {np.mean(conts):.4f} min {np.min(conts):.4f}', flush=True)
    return np.nanmean(chs)

recon_stats(objects[:6], 'train recon')
recon_stats(holdout, 'holdout recon')

from partforge.checkpoint import save_checkpoint, state_dict_to_arrays
from partforge.training import save_vae_checkpoint
save_vae_checkpoint(out/'vae3d_probe.npz', model, kind='vae3d', train_cfg=tcfg)

# denoiser speed at acceptance width
from partforge.denoiser import DualDenoiser, DenoiserConfig, DenoiserState, diffusion_loss
dc = DenoiserConfig()
net = DualDenoiser(dc)
g = torch.Generator().manual_seed(0)
n = 5
state = DenoiserState(
    geom=torch.randn(n,64,32,generator=g), image=torch.randn(n,4,64,16,generator=g),
    part_mask=torch.ones(n,dtype=torch.bool), box_latents=torch.randn(n,64,32,generator=g),
    captions=torch.randint(0,64,(n,8),generator=g), global_geom=torch.randn(64,32,generator=g),
    global_image=torch.randn(4,64,16,generator=g), global_caption=torch.randint(0,64,(8,),generator=g), t=100)
wire = torch.randn(4,64,16,generator=g)
opt = torch.optim.Adam(net.parameters(), lr=1e-4)
t0=time.time()
for i in range(6):
    pred = net(state, wire_latents=wire)
    tot, _ = diffusion_loss(pred, state.geom, state.image, state.global_geom, state.global_image, state.part_mask)
    opt.zero_grad(); tot.backward(); opt.step()
print(f'width-256 train step: {(time.time()-t0)/6:.2f}s', flush=True)
with torch.no_grad():
    t0=time.time()
    for i in range(6): net(state, wire_latents=wire)
    print(f'width-256 fwd: {(time.time()-t0)/6:.2f}s', flush=True)
print('PROBE DONE')
